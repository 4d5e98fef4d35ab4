#pragma once

#include "cohere/assoc.hpp"
#include "cohere/bev.hpp"
#include "cohere/geom.hpp"
#include "cohere/learn.hpp"
#include "cohere/synth.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cohere::io {

namespace fs = std::filesystem;

// Sweep binary: "CHR3", u32 point count, then x, y, z, intensity as f32,
// all little-endian.
void write_sweep(const fs::path& path, const std::vector<Point3>& points);
std::vector<Point3> read_sweep(const fs::path& path);

std::string sweep_filename(int frame, int sweep);

/// One line of the poses manifest.
struct PoseRecord {
  int frame = 0;
  int sweep = 0;
  double t = 0.0;
  Pose pose;
  std::string file;  // relative to the manifest directory
};

std::vector<PoseRecord> read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const std::vector<PoseRecord>& records);

/// Writes every sweep of `frames` plus poses.jsonl into `dir`.
void write_frames(const fs::path& dir, const std::vector<Frame>& frames);
/// Reads poses.jsonl and the referenced sweeps, composing one Frame per
/// frame index in ascending order. Throws EmptyInput("no frames found").
std::vector<Frame> read_frames(const fs::path& dir);

// Tracks as JSON lines: {"track_id":..,"entries":[[frame,cluster,cx,cy,cz],..]}
// with every entry of every track (not just the retained history).
struct TrackRecord {
  int track_id = 0;
  std::vector<TrackEntry> entries;
};

/// Full per-track histories rebuilt from the frame assignments.
std::vector<TrackRecord> track_records(const TrackSet& set, std::span<const FrameDetections> detections);
std::string format_tracks(const std::vector<TrackRecord>& tracks);
std::vector<TrackRecord> parse_tracks(const std::string& text, const std::string& source = "<tracks>");
std::vector<TrackRecord> read_tracks(const fs::path& path);

// FeatureMap binary: H, W, C as u32, then x_min, x_max, y_min, y_max, cell
// as f32, then the row-major payload as f32.
void write_feature_map(const fs::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const fs::path& path);

std::string format_ground_truth(const GroundTruth& truth);
GroundTruth parse_ground_truth(const std::string& text, const std::string& source = "<ground truth>");

std::string format_scene_spec(const SceneSpec& spec);
SceneSpec parse_scene_spec(const std::string& text, const std::string& source = "<scene>");

std::string format_encoder(const EncoderParams& params);
EncoderParams parse_encoder(const std::string& text, const std::string& source = "<encoder>");
std::string format_bank(const MemoryBank& bank);

std::string read_text(const fs::path& path);
/// Writes through a temporary file so readers never see partial output.
void write_text(const fs::path& path, const std::string& text);

/// Fixed-precision decimal used by every text writer.
std::string fixed(double v, int digits = 6);

}  // namespace cohere::io
