#pragma once

#include "cohere/cluster.hpp"
#include "cohere/geom.hpp"
#include "cohere/hungarian.hpp"

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cohere {

struct AssocParams {
  double tau_d = 0.5;  // m, maximum center distance of a valid match
  int history = 16;    // K, historical frames retained per track

  bool operator==(const AssocParams&) const = default;
};

/// Per-frame instance centers; index i is cluster id i.
struct FrameDetections {
  int frame = 0;
  Pose pose;  // frame reference ego -> world
  std::vector<Vec3> center_start;
  std::vector<Vec3> center_end;

  static FrameDetections from(const Frame& frame, const ClusteringResult& clusters);
  std::size_t size() const { return center_start.size(); }
};

struct MatchResult {
  std::vector<std::pair<int, int>> matches;  // (prev id, curr id), ascending prev id
  std::vector<int> births;                   // unmatched current ids
  std::vector<int> deaths;                   // unmatched previous ids
  CostMatrix cost;                           // padded matrix, real entries in meters
};

/// Matches previous last-scan centers (moved into the current frame) to
/// current first-scan centers. Pairs farther apart than tau_d are dropped.
MatchResult match_frames(const FrameDetections& prev, const FrameDetections& curr, double tau_d);

struct TrackEntry {
  int frame = 0;
  int cluster = 0;
  Vec3 center = Vec3::Zero();  // first-scan center, world coordinates
};

struct Track {
  int id = 0;
  int birth_frame = 0;
  int last_frame = 0;
  bool alive = true;
  std::size_t observed = 0;        // frames observed in total
  std::deque<TrackEntry> entries;  // most recent K+1 frames
};

struct TrackSet {
  std::vector<Track> tracks;
  /// frame -> track id of each cluster of that frame.
  std::map<int, std::vector<int>> assignments;

  const Track* find(int track_id) const;
};

/// Streaming form of assemble_tracks: one frame at a time, in order.
class TrackBuilder {
 public:
  explicit TrackBuilder(AssocParams params = {}) : params_(params) {}

  /// Returns the track id of every cluster of `frame`.
  const std::vector<int>& push(const FrameDetections& frame);

  const TrackSet& tracks() const { return set_; }
  TrackSet release() { return std::move(set_); }

 private:
  AssocParams params_;
  TrackSet set_;
  std::optional<FrameDetections> prev_;
};

TrackSet assemble_tracks(std::span<const FrameDetections> frames, const AssocParams& params = {});

}  // namespace cohere
