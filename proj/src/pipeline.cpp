#include "cohere/pipeline.hpp"

#include "cohere/error.hpp"
#include "cohere/parallel.hpp"
#include "cohere/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cohere {

TrackingRun run_tracking(const std::vector<Frame>& frames, const PipelineConfig& config, int threads) {
  config.validate();
  if (frames.empty()) throw Error(ErrorKind::EmptyInput, "no frames found");
  TrackingRun run;
  run.frames.resize(frames.size());
  parallel_for(frames.size(), threads, [&](std::size_t i) {
    FrameResult& r = run.frames[i];
    r.ground = segment_ground(frames[i], config.ground);
    r.clusters = identify_instances(frames[i], r.ground, config.cluster);
    r.detections = FrameDetections::from(frames[i], r.clusters);
  });

  TrackBuilder builder(config.assoc);
  std::vector<FrameDetections> detections;
  detections.reserve(frames.size());
  for (const FrameResult& r : run.frames) {
    builder.push(r.detections);
    detections.push_back(r.detections);
  }
  run.tracks = builder.release();
  run.records = io::track_records(run.tracks, detections);
  return run;
}

TrackMetrics score_tracks(std::span<const io::TrackRecord> pred, const GroundTruth& truth, double match_radius) {
  std::map<int, const FrameTruth*> by_frame;
  for (const FrameTruth& f : truth.frames) by_frame[f.frame] = &f;

  TrackMetrics out;
  for (const FrameTruth& f : truth.frames) out.gt_entries += f.instances.size();

  // Identity of every predicted entry, -1 when nothing lies within reach.
  std::vector<std::vector<int>> identity(pred.size());
  double sq_error = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (const TrackEntry& e : pred[t].entries) {
      const auto it = by_frame.find(e.frame);
      if (it == by_frame.end()) {
        throw Error(ErrorKind::BadIndex, "frame range mismatch: track " + std::to_string(pred[t].track_id) +
                                             " has frame " + std::to_string(e.frame) + " absent from ground truth");
      }
      int best = -1;
      double best_d = match_radius;
      for (const InstanceTruth& inst : it->second->instances) {
        const double d = (inst.start_world - e.center).norm();
        if (d <= best_d) {
          if (d < best_d || best < 0 || inst.object < best) best = inst.object;
          best_d = d;
        }
      }
      identity[t].push_back(best);
      ++out.entries;
      if (best >= 0) {
        ++out.matched_entries;
        sq_error += best_d * best_d;
      }
    }
  }
  if (out.matched_entries > 0) out.center_rmse = std::sqrt(sq_error / static_cast<double>(out.matched_entries));

  std::size_t pure = 0;
  for (const std::vector<int>& ids : identity) {
    std::map<int, std::size_t> votes;
    for (int id : ids) {
      if (id >= 0) ++votes[id];
    }
    std::size_t majority = 0;
    for (const auto& [id, n] : votes) majority = std::max(majority, n);
    pure += majority;
  }
  if (out.entries > 0) out.purity = static_cast<double>(pure) / static_cast<double>(out.entries);

  // object -> frame -> lowest covering track id.
  std::map<int, std::map<int, int>> cover;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (std::size_t k = 0; k < identity[t].size(); ++k) {
      if (identity[t][k] < 0) continue;
      auto [it, inserted] = cover[identity[t][k]].try_emplace(pred[t].entries[k].frame, pred[t].track_id);
      if (!inserted) it->second = std::min(it->second, pred[t].track_id);
    }
  }
  std::size_t covered = 0;
  for (const FrameTruth& f : truth.frames) {
    for (const InstanceTruth& inst : f.instances) {
      const auto obj = cover.find(inst.object);
      if (obj != cover.end() && obj->second.contains(f.frame)) ++covered;
    }
  }
  if (out.gt_entries > 0) out.recall = static_cast<double>(covered) / static_cast<double>(out.gt_entries);

  for (const auto& [object, frames] : cover) {
    int previous = -1;
    for (const auto& [frame, track] : frames) {
      if (previous >= 0 && track != previous) ++out.id_switches;
      previous = track;
    }
  }
  return out;
}

std::map<std::size_t, std::size_t> length_histogram(std::span<const io::TrackRecord> tracks) {
  std::map<std::size_t, std::size_t> out;
  for (const io::TrackRecord& t : tracks) ++out[t.entries.size()];
  return out;
}

// ---------------------------------------------------------------------------

double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>(), 1e-300});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

namespace {

Eigen::MatrixXd random_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, bool unit) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    if (unit) m.row(r).normalize();
  }
  return m;
}

void record(GradCheckReport& report, double err, double tolerance) {
  ++report.checks;
  report.max_rel_error = std::max(report.max_rel_error, err);
  if (!(err <= tolerance)) report.passed = false;
}

}  // namespace

GradCheckReport check_contrastive_gradients(std::uint64_t seed, int configs, double h, double tolerance) {
  constexpr Eigen::Index kChannels = 16;
  GradCheckReport report;
  for (int cfg = 0; cfg < configs; ++cfg) {
    std::mt19937_64 rng = make_stream(seed, {id(Stream::GradCheck), static_cast<std::uint64_t>(cfg)});
    const auto m = static_cast<Eigen::Index>(1 + rng() % 8);
    const auto nb = static_cast<Eigen::Index>(rng() % 17);
    const auto n = static_cast<Eigen::Index>(1 + rng() % 12);
    const double temperature = 0.05 + 0.95 * uniform01(rng);
    const Eigen::MatrixXd targets = random_rows(m, kChannels, rng, true);
    const Eigen::MatrixXd background = random_rows(nb, kChannels, rng, true);
    Eigen::MatrixXd online = random_rows(n, kChannels, rng, false);
    std::vector<int> instance_of(static_cast<std::size_t>(n));
    for (int& k : instance_of) k = static_cast<int>(rng() % static_cast<std::uint64_t>(m));

    const ContrastiveResult res = contrastive_loss(online, instance_of, targets, background, temperature);
    Eigen::MatrixXd numeric(n, kChannels);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < kChannels; ++c) {
        const double keep = online(r, c);
        online(r, c) = keep + h;
        const double up = contrastive_loss(online, instance_of, targets, background, temperature).loss;
        online(r, c) = keep - h;
        const double down = contrastive_loss(online, instance_of, targets, background, temperature).loss;
        online(r, c) = keep;
        numeric(r, c) = (up - down) / (2.0 * h);
      }
    }
    const Eigen::VectorXd a = res.grad.reshaped();
    const Eigen::VectorXd b = numeric.reshaped();
    record(report, gradient_rel_error(a, b), tolerance);
  }
  return report;
}

GradCheckReport check_objective_gradient(const Pretrainer& trainer, const StepContext& ctx, double h,
                                         double tolerance) {
  EncoderParams theta = trainer.online();
  EncoderParams grad;
  trainer.objective(ctx, theta, &grad);
  Eigen::VectorXd numeric(static_cast<Eigen::Index>(theta.values.size()));
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    const double keep = theta.values[i];
    theta.values[i] = keep + h;
    const double up = trainer.objective(ctx, theta, nullptr);
    theta.values[i] = keep - h;
    const double down = trainer.objective(ctx, theta, nullptr);
    theta.values[i] = keep;
    numeric[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * h);
  }
  const Eigen::Map<const Eigen::VectorXd> analytic(grad.values.data(), static_cast<Eigen::Index>(grad.values.size()));
  GradCheckReport report;
  record(report, gradient_rel_error(analytic, numeric), tolerance);
  return report;
}

PretrainRun run_pretrain(const Scene& scene, const PipelineConfig& config, std::uint64_t seed, int steps,
                         bool gradcheck, int threads) {
  config.validate();
  if (steps < 0) throw Error(ErrorKind::InvalidConfig, "steps must be >= 0");
  if (scene.frames.empty()) throw Error(ErrorKind::EmptyInput, "scene has no frames");

  const TrackingRun tracking = run_tracking(scene.frames, config, threads);
  std::vector<std::vector<CameraView>> views(scene.frames.size());
  parallel_for(scene.frames.size(), threads, [&](std::size_t i) {
    views[i] = render_views(scene.frames[i], config.rig, config.learn.depth, seed);
  });

  const int splat_channels = views.front().front().image.channels;
  std::mt19937_64 init_rng = make_stream(seed, {id(Stream::EncoderInit)});
  PretrainRun run;
  run.initial = EncoderParams::random(config.learn.channels, encoder_inputs(splat_channels), init_rng, config.init_scale);
  Pretrainer trainer(config.learn, config.assoc.history, run.initial, seed);

  bool checked = false;
  for (int s = 0; s < steps; ++s) {
    const std::size_t f = static_cast<std::size_t>(s) % scene.frames.size();
    if (f == 0) {
      trainer.reset_history();
      ++run.epochs;
    }
    PretrainFrame input;
    input.frame = &scene.frames[f];
    input.clusters = &tracking.frames[f].clusters;
    input.track_ids = tracking.tracks.assignments.at(scene.frames[f].index);
    input.views = views[f];
    if (gradcheck && !checked && !input.clusters->clusters.empty()) {
      run.gradcheck = check_objective_gradient(trainer, trainer.prepare(input));
      checked = true;
    }
    run.steps.push_back(trainer.step(input));
  }
  run.online = trainer.online();
  run.target = trainer.target();
  run.bank = trainer.bank();
  return run;
}

}  // namespace cohere
