#include "cohere/ground.hpp"

#include "cohere/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace cohere {

namespace {

struct Prototype {
  double r;
  double z;
};

// Running least-squares fit of z = slope * r + intercept.
class LineAccumulator {
 public:
  void add(const Prototype& p) {
    ++n_;
    sr_ += p.r;
    sz_ += p.z;
    srr_ += p.r * p.r;
    srz_ += p.r * p.z;
    szz_ += p.z * p.z;
    if (n_ == 1) r_begin_ = p.r;
    r_end_ = p.r;
  }

  std::size_t size() const { return n_; }

  GroundLine fit() const {
    const double n = static_cast<double>(n_);
    const double mean_r = sr_ / n;
    const double mean_z = sz_ / n;
    const double var_r = srr_ - n * mean_r * mean_r;
    const double cov = srz_ - n * mean_r * mean_z;
    GroundLine line;
    line.r_begin = r_begin_;
    line.r_end = r_end_;
    line.slope = var_r > 1e-12 ? cov / var_r : 0.0;
    line.intercept = mean_z - line.slope * mean_r;
    return line;
  }

  double rmse() const {
    const double n = static_cast<double>(n_);
    const double mean_r = sr_ / n;
    const double mean_z = sz_ / n;
    const double var_r = srr_ - n * mean_r * mean_r;
    const double var_z = szz_ - n * mean_z * mean_z;
    const double cov = srz_ - n * mean_r * mean_z;
    const double sse = var_r > 1e-12 ? var_z - cov * cov / var_r : var_z;
    return std::sqrt(std::max(0.0, sse) / n);
  }

 private:
  std::size_t n_ = 0;
  double sr_ = 0, sz_ = 0, srr_ = 0, srz_ = 0, szz_ = 0;
  double r_begin_ = 0, r_end_ = 0;
};

int segment_of(double x, double y, int n_segments) {
  const double angle = std::atan2(y, x) + std::numbers::pi;
  const int seg = static_cast<int>(angle / (2.0 * std::numbers::pi) * n_segments);
  return std::clamp(seg, 0, n_segments - 1);
}

std::vector<GroundLine> fit_segment(const std::vector<std::optional<Prototype>>& bins, const GroundParams& params) {
  std::vector<GroundLine> lines;
  LineAccumulator current;

  auto expected_height = [&](double r) {
    return lines.empty() ? params.ground_z : lines.back().height_at(r);
  };
  auto try_start = [&](const Prototype& p) {
    if (std::abs(p.z - expected_height(p.r)) <= params.max_start_height) {
      current = LineAccumulator{};
      current.add(p);
    }
  };
  auto finalize = [&]() {
    if (current.size() >= 2) lines.push_back(current.fit());
    current = LineAccumulator{};
  };

  for (const auto& bin : bins) {
    if (!bin) continue;
    if (current.size() == 0) {
      try_start(*bin);
      continue;
    }
    // A prototype far off the current line ends it before it can tilt the fit.
    if (std::abs(bin->z - current.fit().height_at(bin->r)) > params.max_step) {
      finalize();
      try_start(*bin);
      continue;
    }
    LineAccumulator extended = current;
    extended.add(*bin);
    const GroundLine line = extended.fit();
    if (std::abs(line.slope) <= params.max_slope && extended.rmse() <= params.line_eps) {
      current = extended;
    } else {
      finalize();
      try_start(*bin);
    }
  }
  finalize();
  return lines;
}

const GroundLine* nearest_line(const std::vector<GroundLine>& lines, double r) {
  const GroundLine* best = nullptr;
  double best_gap = 0.0;
  for (const GroundLine& line : lines) {
    const double gap = r < line.r_begin ? line.r_begin - r : (r > line.r_end ? r - line.r_end : 0.0);
    if (best == nullptr || gap < best_gap) {
      best = &line;
      best_gap = gap;
    }
  }
  return best;
}

}  // namespace

std::size_t GroundLabeling::ground_count() const {
  return static_cast<std::size_t>(std::count(is_ground.begin(), is_ground.end(), true));
}

std::vector<std::vector<GroundLine>> fit_ground_lines(std::span<const TaggedPoint> points, const GroundParams& params) {
  const int n_bins = static_cast<int>(std::ceil(params.max_range / params.bin_width));
  std::vector<std::vector<std::optional<Prototype>>> grid(params.n_segments,
                                                          std::vector<std::optional<Prototype>>(n_bins));
  for (const TaggedPoint& tp : points) {
    const Point3& p = tp.point;
    const double r = std::hypot(p.x, p.y);
    if (r >= params.max_range) continue;
    const int seg = segment_of(p.x, p.y, params.n_segments);
    const int bin = std::min(static_cast<int>(r / params.bin_width), n_bins - 1);
    auto& cell = grid[seg][bin];
    if (!cell || p.z < cell->z) cell = Prototype{r, p.z};
  }

  std::vector<std::vector<GroundLine>> lines(params.n_segments);
  for (int seg = 0; seg < params.n_segments; ++seg) {
    const auto filled = std::count_if(grid[seg].begin(), grid[seg].end(), [](const auto& b) { return b.has_value(); });
    if (filled >= 2) lines[seg] = fit_segment(grid[seg], params);
  }
  return lines;
}

GroundLabeling segment_ground(std::span<const TaggedPoint> points, const GroundParams& params) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "cannot segment ground of an empty frame");
  if (params.n_segments < 1 || !(params.bin_width > 0.0) || !(params.max_range > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "ground parameters must be positive");
  }

  const auto lines = fit_ground_lines(points, params);
  GroundLabeling out;
  out.params = params;
  out.is_ground.resize(points.size(), false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3& p = points[i].point;
    const double r = std::hypot(p.x, p.y);
    if (r >= params.max_range) continue;
    const auto& seg_lines = lines[segment_of(p.x, p.y, params.n_segments)];
    double reference = params.ground_z;
    if (const GroundLine* line = nearest_line(seg_lines, r)) {
      reference = line->height_at(std::clamp(r, line->r_begin, line->r_end));
    }
    out.is_ground[i] = p.z - reference <= params.d_ground;
  }
  return out;
}

GroundLabeling segment_ground(const Frame& frame, const GroundParams& params) {
  return segment_ground(std::span<const TaggedPoint>(frame.merged_points), params);
}

}  // namespace cohere
