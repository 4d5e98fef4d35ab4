#pragma once

#include "cohere/assoc.hpp"
#include "cohere/cluster.hpp"
#include "cohere/config.hpp"
#include "cohere/ground.hpp"
#include "cohere/io.hpp"
#include "cohere/learn.hpp"
#include "cohere/synth.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace cohere {

struct FrameResult {
  GroundLabeling ground;
  ClusteringResult clusters;
  FrameDetections detections;
};

struct TrackingRun {
  std::vector<FrameResult> frames;
  TrackSet tracks;
  std::vector<io::TrackRecord> records;
};

/// ground -> cluster per frame (parallel over frames), then sequential
/// association. Frames must have increasing indices.
TrackingRun run_tracking(const std::vector<Frame>& frames, const PipelineConfig& config, int threads = 1);

struct TrackMetrics {
  double purity = 1.0;
  double recall = 0.0;
  int id_switches = 0;
  double center_rmse = 0.0;
  std::size_t entries = 0;          // predicted track-frame entries
  std::size_t matched_entries = 0;  // entries assigned a ground-truth object
  std::size_t gt_entries = 0;       // ground-truth object-frames
};

/// Each predicted entry takes the identity of the nearest ground-truth
/// first-scan center of its frame within `match_radius` (else none).
/// Throws BadIndex when pred mentions a frame the ground truth lacks.
TrackMetrics score_tracks(std::span<const io::TrackRecord> pred, const GroundTruth& truth, double match_radius = 1.0);

/// Track count per track length (in frames).
std::map<std::size_t, std::size_t> length_histogram(std::span<const io::TrackRecord> tracks);

struct GradCheckReport {
  std::size_t checks = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// max|a - n| / max(|a|_inf, |n|_inf, tiny) between two gradients.
double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

/// Central differences on the contrastive loss over `configs` random
/// configurations (M <= 8, N_B <= 16, C = 16).
GradCheckReport check_contrastive_gradients(std::uint64_t seed, int configs = 50, double h = 1e-6,
                                            double tolerance = 1e-5);

/// Central differences on the pretraining objective with respect to every
/// encoder parameter, for one prepared step.
GradCheckReport check_objective_gradient(const Pretrainer& trainer, const StepContext& ctx, double h = 1e-6,
                                         double tolerance = 1e-5);

struct PretrainRun {
  std::vector<StepResult> steps;
  EncoderParams initial;
  EncoderParams online;
  EncoderParams target;
  MemoryBank bank;
  std::size_t epochs = 0;
  GradCheckReport gradcheck;  // empty unless requested
};

/// Tracks the scene, renders its camera views and runs `steps` pretraining
/// steps cycling through the frames; memory banks are cleared whenever the
/// sequence restarts.
PretrainRun run_pretrain(const Scene& scene, const PipelineConfig& config, std::uint64_t seed, int steps,
                         bool gradcheck = false, int threads = 1);

}  // namespace cohere
