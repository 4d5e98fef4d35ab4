#include "cohere/commands.hpp"
#include "cohere/error.hpp"

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("COHERE_LOG");
  spdlog::set_level(level != nullptr ? spdlog::level::from_str(level) : spdlog::level::warn);
}

void add_common(CLI::App* app, cohere::cmd::Common& common, std::optional<std::uint64_t>& seed) {
  app->add_option("--config", common.config, "pipeline configuration JSON")->check(CLI::ExistingFile);
  app->add_option("--seed", seed, "root seed for every random stream");
  app->add_option("--out", common.out, "output directory")->capture_default_str();
  app->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"LiDAR instance correspondence and contrastive pretraining toolkit"};
  app.require_subcommand(1);

  cohere::cmd::Common common;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> scene;
  std::optional<std::filesystem::path> check;
  std::filesystem::path input, pred, truth;
  std::optional<int> steps;
  bool gradcheck = false;
  int configs = 50;
  double match_radius = 1.0;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic multi-sweep scene");
  add_common(synth, common, seed);
  synth->add_option("--scene", scene, "scene spec JSON (default: built-in 8-object scene)")->check(CLI::ExistingFile);

  auto* track = app.add_subcommand("track", "ground removal, clustering and association over a sweep directory");
  add_common(track, common, seed);
  track->add_option("input", input, "directory with poses.jsonl and sweep files")->required();
  track->add_option("--check", check, "compare tracks.jsonl byte for byte against this file");
  track->add_flag("--golden", common.golden, "rewrite the --check file from this run");

  auto* pretrain = app.add_subcommand("pretrain-sim", "contrastive pretraining on a synthetic scene");
  add_common(pretrain, common, seed);
  pretrain->add_option("--scene", scene, "scene spec JSON (default: built-in 8-object scene)")->check(CLI::ExistingFile);
  pretrain->add_option("--steps", steps, "number of steps (default: from config)")->check(CLI::NonNegativeNumber);
  pretrain->add_flag("--gradcheck", gradcheck, "finite-difference check of the objective at the first step");

  auto* ev = app.add_subcommand("eval", "score predicted tracks against ground truth");
  add_common(ev, common, seed);
  ev->add_option("--pred", pred, "predicted tracks.jsonl")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", truth, "ground_truth.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--match-radius", match_radius, "meters")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the contrastive loss gradient");
  add_common(grad, common, seed);
  grad->add_option("--configs", configs, "random configurations")->check(CLI::PositiveNumber)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  common.seed = seed;

  try {
    if (*synth) return cohere::cmd::synth_gen(common, scene);
    if (*track) return cohere::cmd::track(common, input, check);
    if (*pretrain) return cohere::cmd::pretrain_sim(common, scene, steps, gradcheck);
    if (*ev) return cohere::cmd::eval(common, pred, truth, match_radius);
    if (*grad) return cohere::cmd::gradcheck(common, configs);
  } catch (const cohere::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
