#include "cohere/commands.hpp"

#include "cohere/config.hpp"
#include "cohere/error.hpp"
#include "cohere/io.hpp"
#include "cohere/pipeline.hpp"
#include "cohere/synth.hpp"

#include <spdlog/spdlog.h>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cohere::cmd {

using nlohmann::json;

namespace {

PipelineConfig load_config(const Common& common) {
  if (!common.config) return {};
  return parse_config(io::read_text(*common.config), common.config->string());
}

SceneSpec load_scene(const std::optional<fs::path>& path, const Common& common) {
  SceneSpec spec = path ? io::parse_scene_spec(io::read_text(*path), path->string()) : default_scene();
  if (common.seed) spec.seed = *common.seed;
  return spec;
}

void write_json(const fs::path& path, const json& doc) {
  io::write_text(path, doc.dump(2) + "\n");
  spdlog::info("wrote {}", path.string());
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string bev_svg(const std::vector<io::TrackRecord>& pred, const GroundTruth& truth) {
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  auto extend = [&](const Vec3& p) {
    x_lo = std::min(x_lo, p.x());
    x_hi = std::max(x_hi, p.x());
    y_lo = std::min(y_lo, p.y());
    y_hi = std::max(y_hi, p.y());
  };
  for (const auto& t : pred) {
    for (const auto& e : t.entries) extend(e.center);
  }
  for (const auto& f : truth.frames) {
    for (const auto& inst : f.instances) extend(inst.start_world);
  }
  if (x_lo > x_hi) x_lo = y_lo = -1.0, x_hi = y_hi = 1.0;
  const double size = 720.0, margin = 40.0;
  const double span = std::max({x_hi - x_lo, y_hi - y_lo, 1.0}) * 1.05;
  const double cx = (x_lo + x_hi) / 2.0, cy = (y_lo + y_hi) / 2.0;
  auto sx = [&](double x) { return io::fixed(margin + (x - cx) / span * size + size / 2.0, 2); };
  auto sy = [&](double y) { return io::fixed(margin + size / 2.0 - (y - cy) / span * size, 2); };

  std::ostringstream svg;
  const std::string total = io::fixed(size + 2 * margin, 0);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total << "\" height=\"" << total << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << "BEV tracks (world x/y, " << io::fixed(span, 1) << " m across); dashed grey = ground truth</text>\n";

  std::map<int, std::vector<Vec3>> gt_paths;
  for (const auto& f : truth.frames) {
    for (const auto& inst : f.instances) gt_paths[inst.object].push_back(inst.start_world);
  }
  for (const auto& [object, path] : gt_paths) {
    svg << "<polyline fill=\"none\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"4 3\" points=\"";
    for (const Vec3& p : path) svg << sx(p.x()) << "," << sy(p.y()) << " ";
    svg << "\"/>\n";
  }
  for (const auto& t : pred) {
    const char* color = kPalette[static_cast<std::size_t>(t.track_id) % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& e : t.entries) svg << sx(e.center.x()) << "," << sy(e.center.y()) << " ";
    svg << "\"/>\n";
    for (const auto& e : t.entries) {
      svg << "<circle cx=\"" << sx(e.center.x()) << "\" cy=\"" << sy(e.center.y()) << "\" r=\"2.5\" fill=\"" << color
          << "\"/>\n";
    }
    if (!t.entries.empty()) {
      const Vec3& p = t.entries.front().center;
      svg << "<text x=\"" << sx(p.x()) << "\" y=\"" << sy(p.y()) << "\" font-family=\"sans-serif\" font-size=\"10\" dx=\"4\""
          << " dy=\"-4\">" << t.track_id << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string histogram_svg(const std::map<std::size_t, std::size_t>& histogram) {
  const double width = 640.0, height = 360.0, margin = 48.0;
  std::size_t max_len = 1, max_count = 1;
  for (const auto& [len, count] : histogram) {
    max_len = std::max(max_len, len);
    max_count = std::max(max_count, count);
  }
  const double bar = (width - 2 * margin) / static_cast<double>(max_len);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << io::fixed(width, 0) << "\" height=\""
      << io::fixed(height, 0) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">Track length (frames)</text>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (const auto& [len, count] : histogram) {
    const double h = (height - 2 * margin - 16) * static_cast<double>(count) / static_cast<double>(max_count);
    const double x = margin + (static_cast<double>(len) - 1.0) * bar;
    svg << "<rect x=\"" << io::fixed(x + 1, 2) << "\" y=\"" << io::fixed(height - margin - h, 2) << "\" width=\""
        << io::fixed(std::max(bar - 2, 1.0), 2) << "\" height=\"" << io::fixed(h, 2) << "\" fill=\"#1f77b4\"/>\n";
    svg << "<text x=\"" << io::fixed(x + bar / 2, 2) << "\" y=\"" << io::fixed(height - margin - h - 4, 2)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << count << "</text>\n";
    svg << "<text x=\"" << io::fixed(x + bar / 2, 2) << "\" y=\"" << io::fixed(height - margin + 14, 2)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << len << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

json histogram_json(const std::map<std::size_t, std::size_t>& histogram) {
  json out = json::object();
  for (const auto& [len, count] : histogram) out[std::to_string(len)] = count;
  return out;
}

}  // namespace

int synth_gen(const Common& common, const std::optional<fs::path>& scene_path) {
  const SceneSpec spec = load_scene(scene_path, common);
  const Scene scene = generate(spec, common.threads);
  for (const std::string& w : scene.warnings) spdlog::warn("{}", w);
  io::write_frames(common.out, scene.frames);
  io::write_text(common.out / "ground_truth.json", io::format_ground_truth(scene.truth));
  io::write_text(common.out / "scene.json", io::format_scene_spec(spec));
  spdlog::info("wrote {} frames to {}", scene.frames.size(), common.out.string());
  return 0;
}

int track(const Common& common, const fs::path& input, const std::optional<fs::path>& check) {
  const PipelineConfig config = load_config(common);
  const std::vector<Frame> frames = io::read_frames(input);
  const TrackingRun run = run_tracking(frames, config, common.threads);
  const std::string tracks = io::format_tracks(run.records);
  io::write_text(common.out / "tracks.jsonl", tracks);

  json instances = json::array();
  std::size_t matched = 0;
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    instances.push_back(run.frames[i].clusters.clusters.size());
    if (i > 0) {
      for (int id : run.tracks.assignments.at(frames[i].index)) {
        const Track* t = run.tracks.find(id);
        if (t != nullptr && t->birth_frame < frames[i].index) ++matched;
      }
    }
  }
  write_json(common.out / "summary.json", {{"frames", frames.size()},
                                           {"first_frame", frames.front().index},
                                           {"last_frame", frames.back().index},
                                           {"instances_per_frame", instances},
                                           {"tracks", run.records.size()},
                                           {"matches", matched},
                                           {"length_histogram", histogram_json(length_histogram(run.records))}});

  if (!check) return 0;
  if (common.golden) {
    io::write_text(*check, tracks);
    spdlog::info("golden file {} rewritten", check->string());
    return 0;
  }
  if (io::read_text(*check) != tracks) {
    spdlog::error("tracks differ from {}", check->string());
    return 1;
  }
  spdlog::info("tracks match {}", check->string());
  return 0;
}

int pretrain_sim(const Common& common, const std::optional<fs::path>& scene_path, std::optional<int> steps,
                 bool gradcheck) {
  const PipelineConfig config = load_config(common);
  const SceneSpec spec = load_scene(scene_path, common);
  const Scene scene = generate(spec, common.threads);
  const int n_steps = steps.value_or(config.pretrain_steps);
  const PretrainRun run = run_pretrain(scene, config, spec.seed, n_steps, gradcheck, common.threads);

  std::string csv = "step,loss,grad_norm\n";
  bool finite = true;
  std::size_t skipped = 0;
  for (std::size_t s = 0; s < run.steps.size(); ++s) {
    const StepResult& r = run.steps[s];
    if (r.skipped) {
      ++skipped;
      continue;
    }
    finite = finite && std::isfinite(r.loss) && std::isfinite(r.grad_norm);
    csv += std::to_string(s) + "," + io::fixed(r.loss, 9) + "," + io::fixed(r.grad_norm, 9) + "\n";
  }
  io::write_text(common.out / "loss.csv", csv);
  write_json(common.out / "params.json", {{"initial", json::parse(io::format_encoder(run.initial))},
                                          {"online", json::parse(io::format_encoder(run.online))},
                                          {"target", json::parse(io::format_encoder(run.target))}});
  io::write_text(common.out / "bank.json", io::format_bank(run.bank));

  json summary = {{"steps", run.steps.size()},
                  {"skipped", skipped},
                  {"epochs", run.epochs},
                  {"seed", spec.seed},
                  {"finite", finite}};
  if (gradcheck) {
    summary["gradcheck"] = {{"checks", run.gradcheck.checks},
                            {"max_rel_error", run.gradcheck.max_rel_error},
                            {"passed", run.gradcheck.passed}};
  }
  write_json(common.out / "summary.json", summary);
  if (!finite) spdlog::error("non-finite loss or gradient");
  if (gradcheck && !run.gradcheck.passed) {
    spdlog::error("objective gradient check failed (max relative error {})", run.gradcheck.max_rel_error);
  }
  return finite && (!gradcheck || run.gradcheck.passed) ? 0 : 1;
}

int eval(const Common& common, const fs::path& pred_path, const fs::path& truth_path, double match_radius) {
  const std::vector<io::TrackRecord> pred = io::read_tracks(pred_path);
  const GroundTruth truth = io::parse_ground_truth(io::read_text(truth_path), truth_path.string());
  const TrackMetrics m = score_tracks(pred, truth, match_radius);
  write_json(common.out / "metrics.json", {{"purity", m.purity},
                                           {"recall", m.recall},
                                           {"id_switches", m.id_switches},
                                           {"center_rmse", m.center_rmse},
                                           {"entries", m.entries},
                                           {"matched_entries", m.matched_entries},
                                           {"gt_entries", m.gt_entries},
                                           {"tracks", pred.size()}});
  io::write_text(common.out / "tracks_bev.svg", bev_svg(pred, truth));
  io::write_text(common.out / "track_lengths.svg", histogram_svg(length_histogram(pred)));
  spdlog::info("purity {:.4f} recall {:.4f} id switches {}", m.purity, m.recall, m.id_switches);
  return 0;
}

int gradcheck(const Common& common, int configs) {
  const std::uint64_t seed = common.seed.value_or(0);
  const GradCheckReport report = check_contrastive_gradients(seed, configs);
  write_json(common.out / "gradcheck.json", {{"seed", seed},
                                             {"configs", report.checks},
                                             {"max_rel_error", report.max_rel_error},
                                             {"tolerance", 1e-5},
                                             {"passed", report.passed}});
  if (!report.passed) spdlog::error("gradient check failed: max relative error {}", report.max_rel_error);
  return report.passed ? 0 : 1;
}

}  // namespace cohere::cmd
