#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace cohere::cmd {

namespace fs = std::filesystem;

struct Common {
  std::optional<fs::path> config;       // PipelineConfig JSON; defaults when unset
  std::optional<std::uint64_t> seed;    // overrides any seed stored in inputs
  fs::path out = "out";
  int threads = 1;
  bool golden = false;                  // rewrite the checked file instead of comparing
};

/// Each command returns the process exit code and throws cohere::Error for
/// malformed input.

/// Writes sweeps, poses.jsonl, ground_truth.json and scene.json.
int synth_gen(const Common& common, const std::optional<fs::path>& scene);

/// Writes tracks.jsonl and summary.json. With `check`, compares tracks.jsonl
/// byte for byte against it (exit 1 on mismatch), or overwrites it in
/// golden mode.
int track(const Common& common, const fs::path& input, const std::optional<fs::path>& check);

/// Writes loss.csv, params.json, bank.json and summary.json. Exit 1 when a
/// loss is non-finite or a requested gradient check fails.
int pretrain_sim(const Common& common, const std::optional<fs::path>& scene, std::optional<int> steps, bool gradcheck);

/// Writes metrics.json, tracks_bev.svg and track_lengths.svg.
int eval(const Common& common, const fs::path& pred, const fs::path& truth, double match_radius);

/// Contrastive-loss finite-difference checks; writes gradcheck.json and
/// exits 1 when any relative error exceeds the tolerance.
int gradcheck(const Common& common, int configs);

}  // namespace cohere::cmd
