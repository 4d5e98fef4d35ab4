#pragma once

#include "cohere/bev.hpp"
#include "cohere/cluster.hpp"
#include "cohere/geom.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace cohere {

// ---------------------------------------------------------------------------
// Sampling and instance features

struct ForegroundSample {
  Eigen::Vector2d position;
  int instance = 0;  // cluster id within the frame
};

struct SamplePlan {
  std::vector<ForegroundSample> foreground;
  std::vector<Eigen::Vector2d> background;

  std::size_t count_for(int instance) const;
};

/// BEV cells covered by each valid cluster's points (undilated).
std::vector<std::vector<std::pair<int, int>>> cluster_footprints(const BevGeometry& geometry, const Frame& frame,
                                                                 const ClusteringResult& clusters);

/// Draws n_foreground samples across cluster footprints, allocated in
/// proportion to footprint cell count with at least one per instance
/// (largest remainder), and n_background samples from cells left unmarked
/// by `occupancy`. Positions are uniform within the chosen cell, clamped to
/// the bilinear interpolation domain.
SamplePlan make_sample_plan(const BevGeometry& geometry, const Frame& frame, const ClusteringResult& clusters,
                            const OccupancyGrid& occupancy, std::size_t n_foreground, std::size_t n_background,
                            std::mt19937_64& rng);

/// Unit-length copy; throws NormalizationDegenerate for a (near) zero vector.
Eigen::VectorXd normalized(const Eigen::VectorXd& v);

struct InstanceFeature {
  Eigen::VectorXd raw;   // mean of the sampled point features
  Eigen::VectorXd unit;  // raw / |raw|
};

/// Mean bilinear feature over the plan's samples of `instance`; throws
/// NoSamples when it has none.
InstanceFeature instance_feature(const FeatureMap& map, const SamplePlan& plan, int instance);

// ---------------------------------------------------------------------------
// Memory bank

/// Per-track history of raw instance features, at most K + 1 frames each.
class MemoryBank {
 public:
  struct Slot {
    int created = 0;
    std::deque<std::pair<int, Eigen::VectorXd>> entries;  // (frame, feature), frames increasing
  };

  explicit MemoryBank(int history = 16) : history_(history) {}

  /// Throws BadIndex when `frame` is not newer than the track's last entry.
  void update(int track, int frame, const Eigen::VectorXd& feature);
  /// Drops banks whose newest entry fell out of the K-frame window of `frame`.
  void prune(int frame);

  bool contains(int track) const { return slots_.contains(track); }
  const Slot& slot(int track) const;
  const std::map<int, Slot>& slots() const { return slots_; }
  int history() const { return history_; }

 private:
  int history_;
  std::map<int, Slot> slots_;
};

/// Arithmetic mean of a track's stored (raw) features. Throws NoHistory.
Eigen::VectorXd temporal_average(const MemoryBank& bank, int track);

// ---------------------------------------------------------------------------
// Toy encoder and EMA

/// Parameters of the per-cell encoder f = tanh(W x + b), flattened as
/// [W row-major, b].
struct EncoderParams {
  int out_channels = 0;
  int in_channels = 0;
  std::vector<double> values;

  static EncoderParams zeros(int out_channels, int in_channels);
  static EncoderParams random(int out_channels, int in_channels, std::mt19937_64& rng, double scale = 0.5);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight() const {
    return {values.data(), out_channels, in_channels};
  }
  Eigen::Map<const Eigen::VectorXd> bias() const {
    return {values.data() + static_cast<std::ptrdiff_t>(out_channels) * in_channels, out_channels};
  }
  bool same_shape(const EncoderParams& other) const {
    return out_channels == other.out_channels && in_channels == other.in_channels &&
           values.size() == other.values.size();
  }
  bool operator==(const EncoderParams&) const = default;
};

/// Number of encoder inputs for a splat with `splat_channels` channels:
/// log1p of each splat channel plus the two normalized cell coordinates.
int encoder_inputs(int splat_channels);

FeatureMap encode(const EncoderParams& params, const FeatureMap& splat);

/// Gradient with respect to the parameters given dL/d(output features).
/// `encoded` must be encode(params, splat).
EncoderParams encode_backward(const EncoderParams& params, const FeatureMap& splat, const FeatureMap& encoded,
                              const FeatureMap& grad_output);

/// target' = momentum * target + (1 - momentum) * online, elementwise.
EncoderParams ema_update(const EncoderParams& target, const EncoderParams& online, double momentum);

// ---------------------------------------------------------------------------
// Point-to-instance contrastive loss

struct ContrastiveResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;                 // d loss / d raw online rows
  std::vector<double> positive_prob;    // q per sample
};

/// Negative log-likelihood form of the point-to-instance loss.
///
/// `online` holds one raw (unnormalized) feature per row; row j belongs to
/// instance `instance_of[j]`. `instance_targets` (M rows) and `background`
/// (N_B rows, may be empty) must be unit length within 1e-6, else
/// NotNormalized. Target rows are constants. The gradient is taken through
/// the L2 normalization of the online rows.
ContrastiveResult contrastive_loss(const Eigen::MatrixXd& online, std::span<const int> instance_of,
                                   const Eigen::MatrixXd& instance_targets, const Eigen::MatrixXd& background,
                                   double temperature);

// ---------------------------------------------------------------------------
// Pretraining

struct LearnParams {
  int n_foreground = 1000;
  int n_background = 1000;
  double temperature = 0.1;
  double momentum = 0.99;
  double dropout = 0.3;
  double learning_rate = 1e-2;
  int channels = 16;
  int occupancy_dilation = 1;
  BevGeometry bev;
  DepthBins depth;

  bool operator==(const LearnParams&) const = default;
};

/// One camera's synthetic input: per-pixel features and estimated depth
/// distributions (k_gt set where a LiDAR return exists).
struct CameraView {
  CameraModel camera;
  ImageFeatures image;
  std::vector<DepthDistribution> estimated;
};

struct PretrainFrame {
  const Frame* frame = nullptr;
  const ClusteringResult* clusters = nullptr;
  std::vector<int> track_ids;  // per cluster id
  std::vector<CameraView> views;
};

struct StepResult {
  bool skipped = false;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t instances = 0;
};

/// Everything a step needs that does not depend on the online parameters.
struct StepContext {
  FeatureMap online_splat;
  SamplePlan plan;
  Eigen::MatrixXd instance_targets;  // unit temporal averages, one row per instance
  Eigen::MatrixXd background;        // unit target background features
  std::vector<int> instance_of;      // per foreground sample, row in instance_targets
  std::vector<std::pair<int, Eigen::VectorXd>> bank_updates;  // (track, raw target instance feature)
};

/// Online / target encoders, the memory bank and the step loop.
class Pretrainer {
 public:
  Pretrainer(LearnParams params, int history, EncoderParams init, std::uint64_t seed);

  /// Skips (banks age, nothing updates) when the frame has no valid instance.
  StepResult step(const PretrainFrame& input);

  /// Builds the step context for `input` at the next step index without
  /// mutating any state.
  StepContext prepare(const PretrainFrame& input) const;
  /// Loss of the online parameters `theta` on a prepared context; fills
  /// `grad` when non-null.
  double objective(const StepContext& ctx, const EncoderParams& theta, EncoderParams* grad) const;

  /// Clears all memory banks, e.g. before replaying a sequence from its start.
  void reset_history() { bank_ = MemoryBank(bank_.history()); }

  const EncoderParams& online() const { return online_; }
  const EncoderParams& target() const { return target_; }
  const MemoryBank& bank() const { return bank_; }
  const LearnParams& params() const { return params_; }
  std::size_t steps_taken() const { return step_; }

 private:
  LearnParams params_;
  EncoderParams online_;
  EncoderParams target_;
  MemoryBank bank_;
  std::uint64_t seed_;
  std::size_t step_ = 0;
};

}  // namespace cohere
