#include "cohere/learn.hpp"

#include "cohere/error.hpp"
#include "cohere/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace cohere {

namespace {

constexpr double kUnitTol = 1e-6;
constexpr double kDegenerateNorm = 1e-12;

Eigen::Vector2d clamp_to_domain(const BevGeometry& g, Eigen::Vector2d p) {
  const Eigen::Vector2d lo = g.cell_center(0, 0);
  const Eigen::Vector2d hi = g.cell_center(g.height() - 1, g.width() - 1);
  return {std::clamp(p.x(), lo.x(), hi.x()), std::clamp(p.y(), lo.y(), hi.y())};
}

Eigen::Vector2d uniform_in_cell(const BevGeometry& g, int row, int col, std::mt19937_64& rng) {
  const double x = g.x_min + (col + uniform01(rng)) * g.cell;
  const double y = g.y_min + (row + uniform01(rng)) * g.cell;
  return clamp_to_domain(g, {x, y});
}

std::size_t pick(std::size_t n, std::mt19937_64& rng) {
  return std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)), n - 1);
}

// Largest-remainder allocation of `total` over `weights` with a floor of one.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& weights, std::size_t total) {
  const std::size_t m = weights.size();
  std::vector<std::size_t> out(m, 1);
  if (m == 0 || total <= m) return out;
  const std::size_t spare = total - m;
  const double sum = static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::size_t{0}));
  std::vector<double> remainder(m);
  std::size_t given = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double quota = static_cast<double>(spare) * static_cast<double>(weights[i]) / sum;
    const auto whole = static_cast<std::size_t>(std::floor(quota));
    out[i] += whole;
    given += whole;
    remainder[i] = quota - static_cast<double>(whole);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; given < spare; ++k, ++given) ++out[order[k % m]];
  return out;
}

double signed_log1p(double v) { return std::copysign(std::log1p(std::abs(v)), v); }

void check_unit_rows(const Eigen::MatrixXd& rows, const char* what) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double norm = rows.row(r).norm();
    if (std::abs(norm - 1.0) > kUnitTol) {
      throw Error(ErrorKind::NotNormalized,
                  std::string(what) + " row " + std::to_string(r) + " has norm " + std::to_string(norm));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t SamplePlan::count_for(int instance) const {
  return static_cast<std::size_t>(std::count_if(foreground.begin(), foreground.end(),
                                                [&](const ForegroundSample& s) { return s.instance == instance; }));
}

std::vector<std::vector<std::pair<int, int>>> cluster_footprints(const BevGeometry& geometry, const Frame& frame,
                                                                 const ClusteringResult& clusters) {
  std::vector<std::vector<std::pair<int, int>>> out;
  out.reserve(clusters.clusters.size());
  for (const Cluster& c : clusters.clusters) {
    std::set<std::pair<int, int>> cells;
    for (std::size_t i : c.points) {
      const Point3& p = frame.merged_points[i].point;
      if (const auto cell = geometry.cell_of(p.x, p.y)) cells.insert(*cell);
    }
    out.emplace_back(cells.begin(), cells.end());
  }
  return out;
}

SamplePlan make_sample_plan(const BevGeometry& geometry, const Frame& frame, const ClusteringResult& clusters,
                            const OccupancyGrid& occupancy, std::size_t n_foreground, std::size_t n_background,
                            std::mt19937_64& rng) {
  SamplePlan plan;
  const auto footprints = cluster_footprints(geometry, frame, clusters);
  std::vector<std::size_t> areas;
  for (const auto& f : footprints) areas.push_back(f.size());

  const std::vector<std::size_t> counts = allocate(areas, std::max(n_foreground, footprints.size()));
  for (std::size_t m = 0; m < footprints.size(); ++m) {
    if (footprints[m].empty()) {
      throw Error(ErrorKind::NoSamples, "instance " + std::to_string(m) + " has no footprint inside the BEV grid");
    }
    for (std::size_t k = 0; k < counts[m]; ++k) {
      const auto [row, col] = footprints[m][pick(footprints[m].size(), rng)];
      plan.foreground.push_back({uniform_in_cell(geometry, row, col, rng), static_cast<int>(m)});
    }
  }

  std::vector<std::pair<int, int>> free_cells;
  for (int r = 0; r < occupancy.height; ++r) {
    for (int c = 0; c < occupancy.width; ++c) {
      if (!occupancy.at(r, c)) free_cells.emplace_back(r, c);
    }
  }
  if (!free_cells.empty()) {
    for (std::size_t k = 0; k < n_background; ++k) {
      const auto [row, col] = free_cells[pick(free_cells.size(), rng)];
      plan.background.push_back(uniform_in_cell(geometry, row, col, rng));
    }
  }
  return plan;
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double norm = v.norm();
  if (!(norm > kDegenerateNorm)) throw Error(ErrorKind::NormalizationDegenerate, "cannot normalize a zero vector");
  return v / norm;
}

InstanceFeature instance_feature(const FeatureMap& map, const SamplePlan& plan, int instance) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(map.channels());
  std::size_t n = 0;
  for (const ForegroundSample& s : plan.foreground) {
    if (s.instance != instance) continue;
    sum += sample_bilinear(map, s.position.x(), s.position.y());
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::NoSamples, "no samples for instance " + std::to_string(instance));
  InstanceFeature out;
  out.raw = sum / static_cast<double>(n);
  out.unit = normalized(out.raw);
  return out;
}

// ---------------------------------------------------------------------------

void MemoryBank::update(int track, int frame, const Eigen::VectorXd& feature) {
  auto [it, inserted] = slots_.try_emplace(track);
  Slot& slot = it->second;
  if (inserted) slot.created = frame;
  if (!slot.entries.empty() && frame <= slot.entries.back().first) {
    throw Error(ErrorKind::BadIndex, "memory bank of track " + std::to_string(track) + " already holds frame " +
                                         std::to_string(slot.entries.back().first));
  }
  slot.entries.emplace_back(frame, feature);
  while (slot.entries.size() > static_cast<std::size_t>(history_) + 1) slot.entries.pop_front();
}

void MemoryBank::prune(int frame) {
  std::erase_if(slots_, [&](const auto& kv) { return kv.second.entries.back().first < frame - history_; });
}

const MemoryBank::Slot& MemoryBank::slot(int track) const {
  const auto it = slots_.find(track);
  if (it == slots_.end()) throw Error(ErrorKind::NoHistory, "no memory bank for track " + std::to_string(track));
  return it->second;
}

Eigen::VectorXd temporal_average(const MemoryBank& bank, int track) {
  const MemoryBank::Slot& s = bank.slot(track);
  if (s.entries.empty()) throw Error(ErrorKind::NoHistory, "empty memory bank for track " + std::to_string(track));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(s.entries.front().second.size());
  for (const auto& [frame, feature] : s.entries) sum += feature;
  return sum / static_cast<double>(s.entries.size());
}

// ---------------------------------------------------------------------------

EncoderParams EncoderParams::zeros(int out_channels, int in_channels) {
  EncoderParams p;
  p.out_channels = out_channels;
  p.in_channels = in_channels;
  p.values.assign(static_cast<std::size_t>(out_channels) * (in_channels + 1), 0.0);
  return p;
}

EncoderParams EncoderParams::random(int out_channels, int in_channels, std::mt19937_64& rng, double scale) {
  EncoderParams p = zeros(out_channels, in_channels);
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(in_channels)));
  const std::size_t n_weights = static_cast<std::size_t>(out_channels) * in_channels;
  for (std::size_t i = 0; i < n_weights; ++i) p.values[i] = normal(rng);
  return p;
}

int encoder_inputs(int splat_channels) { return splat_channels + 2; }

namespace {

Eigen::VectorXd encoder_input(const FeatureMap& splat, int row, int col) {
  const BevGeometry& g = splat.geometry();
  const int c = splat.channels();
  Eigen::VectorXd x(encoder_inputs(c));
  const auto values = splat.at(row, col);
  for (int k = 0; k < c; ++k) x[k] = signed_log1p(values[k]);
  const Eigen::Vector2d center = g.cell_center(row, col);
  x[c] = center.x() / std::max(std::abs(g.x_min), std::abs(g.x_max));
  x[c + 1] = center.y() / std::max(std::abs(g.y_min), std::abs(g.y_max));
  return x;
}

}  // namespace

FeatureMap encode(const EncoderParams& params, const FeatureMap& splat) {
  if (params.in_channels != encoder_inputs(splat.channels())) {
    throw Error(ErrorKind::ShapeMismatch, "encoder expects " + std::to_string(params.in_channels) + " inputs, splat gives " +
                                              std::to_string(encoder_inputs(splat.channels())));
  }
  FeatureMap out(splat.geometry(), params.out_channels);
  const auto w = params.weight();
  const auto b = params.bias();
  for (int r = 0; r < splat.height(); ++r) {
    for (int c = 0; c < splat.width(); ++c) {
      out.vec(r, c) = (w * encoder_input(splat, r, c) + b).array().tanh().matrix();
    }
  }
  return out;
}

EncoderParams encode_backward(const EncoderParams& params, const FeatureMap& splat, const FeatureMap& encoded,
                              const FeatureMap& grad_output) {
  EncoderParams grad = EncoderParams::zeros(params.out_channels, params.in_channels);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(
      grad.values.data(), params.out_channels, params.in_channels);
  Eigen::Map<Eigen::VectorXd> db(grad.values.data() + static_cast<std::ptrdiff_t>(params.out_channels) * params.in_channels,
                                 params.out_channels);
  for (int r = 0; r < splat.height(); ++r) {
    for (int c = 0; c < splat.width(); ++c) {
      const auto g = grad_output.vec(r, c);
      if (g.isZero(0.0)) continue;
      const auto f = encoded.vec(r, c);
      const Eigen::VectorXd da = g.cwiseProduct((1.0 - f.array().square()).matrix());
      dw.noalias() += da * encoder_input(splat, r, c).transpose();
      db += da;
    }
  }
  return grad;
}

EncoderParams ema_update(const EncoderParams& target, const EncoderParams& online, double momentum) {
  if (!target.same_shape(online)) throw Error(ErrorKind::ShapeMismatch, "online and target parameters differ in shape");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1]");
  EncoderParams out = target;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = momentum * target.values[i] + (1.0 - momentum) * online.values[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

ContrastiveResult contrastive_loss(const Eigen::MatrixXd& online, std::span<const int> instance_of,
                                   const Eigen::MatrixXd& instance_targets, const Eigen::MatrixXd& background,
                                   double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::BadTemperature, "temperature must be positive");
  const Eigen::Index n = online.rows();
  const Eigen::Index m = instance_targets.rows();
  if (n == 0) throw Error(ErrorKind::NoSamples, "contrastive loss needs at least one foreground sample");
  if (m == 0) throw Error(ErrorKind::EmptyInput, "contrastive loss needs at least one instance");
  if (static_cast<Eigen::Index>(instance_of.size()) != n) {
    throw Error(ErrorKind::ShapeMismatch, "one instance index per online row required");
  }
  if (instance_targets.cols() != online.cols() || (background.rows() > 0 && background.cols() != online.cols())) {
    throw Error(ErrorKind::ShapeMismatch, "feature dimensions differ");
  }
  check_unit_rows(instance_targets, "instance target");
  check_unit_rows(background, "background");

  // Keys: instances first, then background.
  Eigen::MatrixXd keys(m + background.rows(), online.cols());
  keys.topRows(m) = instance_targets;
  if (background.rows() > 0) keys.bottomRows(background.rows()) = background;

  ContrastiveResult out;
  out.grad = Eigen::MatrixXd::Zero(n, online.cols());
  out.positive_prob.resize(static_cast<std::size_t>(n));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int pos = instance_of[static_cast<std::size_t>(j)];
    if (pos < 0 || pos >= m) throw Error(ErrorKind::BadIndex, "instance index " + std::to_string(pos) + " out of range");
    const double norm = online.row(j).norm();
    if (!(norm > kDegenerateNorm)) throw Error(ErrorKind::NormalizationDegenerate, "zero online feature");
    const Eigen::VectorXd z = online.row(j).transpose() / norm;

    const Eigen::VectorXd logits = keys * z / temperature;
    const double top = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - top).exp().matrix();
    const double partition = e.sum();
    const Eigen::VectorXd prob = e / partition;

    out.loss -= (logits[pos] - top - std::log(partition)) * inv_n;
    out.positive_prob[static_cast<std::size_t>(j)] = prob[pos];

    const Eigen::VectorXd dz = (keys.transpose() * prob - keys.row(pos).transpose()) * (inv_n / temperature);
    out.grad.row(j) = ((dz - z * z.dot(dz)) / norm).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

Pretrainer::Pretrainer(LearnParams params, int history, EncoderParams init, std::uint64_t seed)
    : params_(params), online_(init), target_(std::move(init)), bank_(history), seed_(seed) {
  if (!(params_.temperature > 0.0)) throw Error(ErrorKind::BadTemperature, "temperature must be positive");
  if (!(params_.momentum >= 0.0 && params_.momentum <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1]");
  }
  if (!(params_.dropout >= 0.0 && params_.dropout <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "dropout must lie in [0, 1]");
  }
  if (online_.out_channels != params_.channels) {
    throw Error(ErrorKind::ShapeMismatch, "encoder output channels differ from the configured channel count");
  }
  params_.bev.validate();
}

StepContext Pretrainer::prepare(const PretrainFrame& input) const {
  if (input.frame == nullptr || input.clusters == nullptr) throw Error(ErrorKind::EmptyInput, "pretrain frame is unset");
  const Frame& frame = *input.frame;
  const ClusteringResult& clusters = *input.clusters;
  if (input.track_ids.size() != clusters.clusters.size()) {
    throw Error(ErrorKind::ShapeMismatch, "one track id per cluster required");
  }
  if (input.views.empty()) throw Error(ErrorKind::EmptyInput, "pretrain frame has no camera views");
  const int splat_channels = input.views.front().image.channels;

  StepContext ctx;
  ctx.online_splat = FeatureMap(params_.bev, splat_channels);
  FeatureMap target_splat(params_.bev, splat_channels);
  std::mt19937_64 dropout_rng = make_stream(seed_, {id(Stream::Dropout), step_});
  for (const CameraView& view : input.views) {
    std::vector<DepthDistribution> online_depth;
    std::vector<DepthDistribution> target_depth;
    online_depth.reserve(view.estimated.size());
    target_depth.reserve(view.estimated.size());
    for (const DepthDistribution& est : view.estimated) {
      online_depth.push_back(dropout_mask(est, params_.dropout, dropout_rng));
      target_depth.push_back(est.k_gt ? merge_depth(est, *est.k_gt) : est);
    }
    lift_splat_into(ctx.online_splat, view.image, online_depth, params_.depth, view.camera);
    lift_splat_into(target_splat, view.image, target_depth, params_.depth, view.camera);
  }
  if (clusters.clusters.empty()) return ctx;

  const FeatureMap target_map = encode(target_, target_splat);
  const OccupancyGrid occupancy = occupancy_mask(params_.bev, frame, clusters, params_.occupancy_dilation);
  std::mt19937_64 plan_rng = make_stream(seed_, {id(Stream::SampleForeground), step_});
  ctx.plan = make_sample_plan(params_.bev, frame, clusters, occupancy, static_cast<std::size_t>(params_.n_foreground),
                              static_cast<std::size_t>(params_.n_background), plan_rng);

  MemoryBank bank = bank_;
  const auto m = static_cast<Eigen::Index>(clusters.clusters.size());
  ctx.instance_targets.resize(m, params_.channels);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int track = input.track_ids[static_cast<std::size_t>(i)];
    Eigen::VectorXd raw = instance_feature(target_map, ctx.plan, static_cast<int>(i)).raw;
    bank.update(track, frame.index, raw);
    ctx.bank_updates.emplace_back(track, std::move(raw));
    ctx.instance_targets.row(i) = normalized(temporal_average(bank, track)).transpose();
  }
  ctx.background.resize(static_cast<Eigen::Index>(ctx.plan.background.size()), params_.channels);
  for (std::size_t l = 0; l < ctx.plan.background.size(); ++l) {
    const Eigen::Vector2d& pos = ctx.plan.background[l];
    ctx.background.row(static_cast<Eigen::Index>(l)) = normalized(sample_bilinear(target_map, pos.x(), pos.y())).transpose();
  }
  for (const ForegroundSample& s : ctx.plan.foreground) ctx.instance_of.push_back(s.instance);
  return ctx;
}

double Pretrainer::objective(const StepContext& ctx, const EncoderParams& theta, EncoderParams* grad) const {
  const FeatureMap online_map = encode(theta, ctx.online_splat);
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ctx.plan.foreground.size()), theta.out_channels);
  for (std::size_t j = 0; j < ctx.plan.foreground.size(); ++j) {
    const Eigen::Vector2d& pos = ctx.plan.foreground[j].position;
    rows.row(static_cast<Eigen::Index>(j)) = sample_bilinear(online_map, pos.x(), pos.y()).transpose();
  }
  const ContrastiveResult res =
      contrastive_loss(rows, ctx.instance_of, ctx.instance_targets, ctx.background, params_.temperature);
  if (grad != nullptr) {
    FeatureMap grad_map(online_map.geometry(), online_map.channels());
    for (std::size_t j = 0; j < ctx.plan.foreground.size(); ++j) {
      const Eigen::Vector2d& pos = ctx.plan.foreground[j].position;
      const BilinearStencil s = bilinear_stencil(online_map.geometry(), pos.x(), pos.y());
      for (int k = 0; k < 4; ++k) {
        grad_map.vec(s.rows[k], s.cols[k]) += s.weights[k] * res.grad.row(static_cast<Eigen::Index>(j)).transpose();
      }
    }
    *grad = encode_backward(theta, ctx.online_splat, online_map, grad_map);
  }
  return res.loss;
}

StepResult Pretrainer::step(const PretrainFrame& input) {
  StepResult result;
  if (input.clusters == nullptr || input.frame == nullptr) throw Error(ErrorKind::EmptyInput, "pretrain frame is unset");
  if (input.clusters->clusters.empty()) {
    bank_.prune(input.frame->index);
    ++step_;
    result.skipped = true;
    return result;
  }

  const StepContext ctx = prepare(input);
  for (const auto& [track, feature] : ctx.bank_updates) bank_.update(track, input.frame->index, feature);

  EncoderParams grad;
  result.loss = objective(ctx, online_, &grad);
  result.instances = input.clusters->clusters.size();
  double sq = 0.0;
  for (std::size_t i = 0; i < online_.values.size(); ++i) {
    online_.values[i] -= params_.learning_rate * grad.values[i];
    sq += grad.values[i] * grad.values[i];
  }
  result.grad_norm = std::sqrt(sq);
  target_ = ema_update(target_, online_, params_.momentum);
  bank_.prune(input.frame->index);
  ++step_;
  return result;
}

}  // namespace cohere
