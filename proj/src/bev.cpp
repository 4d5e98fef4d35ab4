#include "cohere/bev.hpp"

#include "cohere/error.hpp"
#include "cohere/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cohere {

namespace {

// Snap tolerance, in cell units, so points computed as cell centers hit
// the node exactly despite rounding.
constexpr double kSnap = 1e-9;

int cells_along(double lo, double hi, double cell) { return static_cast<int>(std::lround((hi - lo) / cell)); }

// Position along one axis in cell-center units, split into a base index and
// fraction. Returns false outside [0, n - 1].
bool axis_split(double t, int n, int& base, double& frac) {
  if (t < -kSnap || t > (n - 1) + kSnap) return false;
  const double nearest = std::round(t);
  if (std::abs(t - nearest) < kSnap) t = nearest;
  t = std::clamp(t, 0.0, static_cast<double>(n - 1));
  base = std::min(static_cast<int>(std::floor(t)), std::max(n - 2, 0));
  frac = t - base;
  return true;
}

}  // namespace

int BevGeometry::width() const { return cells_along(x_min, x_max, cell); }
int BevGeometry::height() const { return cells_along(y_min, y_max, cell); }

void BevGeometry::validate() const {
  if (!(cell > 0.0) || !(x_max > x_min) || !(y_max > y_min) || width() < 1 || height() < 1) {
    throw Error(ErrorKind::InvalidConfig, "BEV geometry needs a positive cell size and a non-empty extent");
  }
}

std::optional<std::pair<int, int>> BevGeometry::cell_of(double x, double y) const {
  if (!(x >= x_min && x < x_max && y >= y_min && y < y_max)) return std::nullopt;
  const int col = std::min(static_cast<int>((x - x_min) / cell), width() - 1);
  const int row = std::min(static_cast<int>((y - y_min) / cell), height() - 1);
  return std::make_pair(row, col);
}

Eigen::Vector2d BevGeometry::cell_center(int row, int col) const {
  return {x_min + (col + 0.5) * cell, y_min + (row + 0.5) * cell};
}

FeatureMap::FeatureMap(const BevGeometry& geometry, int channels)
    : geometry_(geometry), height_(geometry.height()), width_(geometry.width()), channels_(channels) {
  geometry.validate();
  if (channels < 1) throw Error(ErrorKind::InvalidConfig, "feature map needs at least one channel");
  data_.assign(static_cast<std::size_t>(height_) * width_ * channels_, 0.0);
}

BilinearStencil bilinear_stencil(const BevGeometry& g, double x, double y) {
  const double u = (x - g.x_min) / g.cell - 0.5;
  const double v = (y - g.y_min) / g.cell - 0.5;
  int c0 = 0, r0 = 0;
  double fu = 0.0, fv = 0.0;
  const int w = g.width(), h = g.height();
  if (!std::isfinite(u) || !std::isfinite(v) || !axis_split(u, w, c0, fu) || !axis_split(v, h, r0, fv)) {
    throw Error(ErrorKind::OutOfBounds, "sample (" + std::to_string(x) + ", " + std::to_string(y) +
                                            ") outside the interpolation domain");
  }
  const int c1 = std::min(c0 + 1, w - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  BilinearStencil s;
  s.rows = {r0, r0, r1, r1};
  s.cols = {c0, c1, c0, c1};
  s.weights = {(1.0 - fv) * (1.0 - fu), (1.0 - fv) * fu, fv * (1.0 - fu), fv * fu};
  return s;
}

Eigen::VectorXd sample_bilinear(const FeatureMap& map, double x, double y) {
  const BilinearStencil s = bilinear_stencil(map.geometry(), x, y);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(map.channels());
  for (int k = 0; k < 4; ++k) {
    if (s.weights[k] != 0.0) out += s.weights[k] * map.vec(s.rows[k], s.cols[k]);
  }
  return out;
}

std::optional<std::size_t> DepthBins::index_of(double d) const {
  const double k = std::round((d - d0) / delta);
  if (!std::isfinite(k) || k < 1.0 || k > count) return std::nullopt;
  return static_cast<std::size_t>(k);
}

double DepthDistribution::sum() const { return std::accumulate(p.begin(), p.end(), 0.0); }

std::size_t DepthDistribution::argmax() const {
  if (p.empty()) throw Error(ErrorKind::EmptyInput, "argmax of an empty distribution");
  const double top = *std::max_element(p.begin(), p.end());
  if (k_gt && *k_gt >= 1 && *k_gt <= p.size() && p[*k_gt - 1] == top) return *k_gt;
  return static_cast<std::size_t>(std::find(p.begin(), p.end(), top) - p.begin()) + 1;
}

DepthDistribution merge_depth(const DepthDistribution& est, std::size_t k_gt) {
  if (k_gt < 1 || k_gt > est.p.size()) {
    throw Error(ErrorKind::BadIndex, "k_gt " + std::to_string(k_gt) + " outside 1.." + std::to_string(est.p.size()));
  }
  if (std::abs(est.sum() - 1.0) > 1e-6) throw Error(ErrorKind::NotNormalized, "estimated depth must sum to 1");
  DepthDistribution out = est;
  out.k_gt = k_gt;
  out.p[k_gt - 1] = 1.0;
  const double total = out.sum();
  for (double& v : out.p) v /= total;
  return out;
}

DepthDistribution dropout_mask(const DepthDistribution& est, double r, std::mt19937_64& rng) {
  if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidConfig, "dropout rate must lie in [0, 1]");
  DepthDistribution out = est;
  for (double& v : out.p) {
    if (uniform01(rng) < r) v = 0.0;
  }
  return out;
}

DepthDistribution dropout_mask(const DepthDistribution& est, double r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dropout_mask(est, r, rng);
}

Vec3 CameraModel::ray_point(double u, double v, double depth) const {
  const Vec3 cam((u - cx) / fx * depth, (v - cy) / fy * depth, depth);
  return extrinsic.apply(cam);
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorKind::InvalidConfig, "focal lengths must be positive");
}

void lift_splat_into(FeatureMap& map, const ImageFeatures& image, std::span<const DepthDistribution> depths,
                     const DepthBins& bins, const CameraModel& camera) {
  camera.validate();
  if (depths.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw Error(ErrorKind::ShapeMismatch, "one depth distribution per pixel required");
  }
  if (image.channels != map.channels()) throw Error(ErrorKind::ShapeMismatch, "image and BEV channel counts differ");
  const BevGeometry& g = map.geometry();
  for (int h = 0; h < image.height; ++h) {
    for (int w = 0; w < image.width; ++w) {
      const DepthDistribution& dist = depths[static_cast<std::size_t>(h) * image.width + w];
      if (dist.p.size() != static_cast<std::size_t>(bins.count)) {
        throw Error(ErrorKind::ShapeMismatch, "depth distribution length differs from the bin count");
      }
      const auto feature = image.pixel(h, w);
      for (std::size_t k = 1; k <= dist.p.size(); ++k) {
        const double weight = dist.p[k - 1];
        if (weight == 0.0) continue;
        const Vec3 pt = camera.ray_point(w, h, bins.depth(k));
        const auto cell = g.cell_of(pt.x(), pt.y());
        if (!cell) continue;
        auto target = map.at(cell->first, cell->second);
        for (std::size_t c = 0; c < target.size(); ++c) target[c] += weight * feature[c];
      }
    }
  }
}

FeatureMap lift_splat(const ImageFeatures& image, std::span<const DepthDistribution> depths, const DepthBins& bins,
                      const CameraModel& camera, const BevGeometry& target) {
  FeatureMap map(target, image.channels);
  lift_splat_into(map, image, depths, bins, camera);
  return map;
}

std::size_t OccupancyGrid::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
}

OccupancyGrid occupancy_mask(const BevGeometry& geometry, std::span<const Vec3> points, int dilation) {
  geometry.validate();
  if (dilation < 0) throw Error(ErrorKind::InvalidConfig, "dilation must be >= 0");
  OccupancyGrid grid;
  grid.height = geometry.height();
  grid.width = geometry.width();
  std::vector<char> seed(static_cast<std::size_t>(grid.height) * grid.width, 0);
  for (const Vec3& p : points) {
    if (const auto cell = geometry.cell_of(p.x(), p.y())) {
      seed[static_cast<std::size_t>(cell->first) * grid.width + cell->second] = 1;
    }
  }
  grid.cells.assign(seed.size(), 0);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (!seed[static_cast<std::size_t>(r) * grid.width + c]) continue;
      for (int rr = std::max(0, r - dilation); rr <= std::min(grid.height - 1, r + dilation); ++rr) {
        for (int cc = std::max(0, c - dilation); cc <= std::min(grid.width - 1, c + dilation); ++cc) {
          grid.cells[static_cast<std::size_t>(rr) * grid.width + cc] = 1;
        }
      }
    }
  }
  return grid;
}

OccupancyGrid occupancy_mask(const BevGeometry& geometry, const Frame& frame, const ClusteringResult& clusters,
                             int dilation) {
  std::vector<Vec3> points;
  for (const Cluster& c : clusters.clusters) {
    for (std::size_t i : c.points) points.push_back(frame.merged_points[i].point.vec());
  }
  return occupancy_mask(geometry, points, dilation);
}

}  // namespace cohere
