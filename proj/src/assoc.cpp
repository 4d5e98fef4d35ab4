#include "cohere/assoc.hpp"

#include "cohere/error.hpp"

#include <algorithm>
#include <string>

namespace cohere {

FrameDetections FrameDetections::from(const Frame& frame, const ClusteringResult& clusters) {
  FrameDetections out;
  out.frame = frame.index;
  out.pose = frame.frame_pose;
  for (const Cluster& c : clusters.clusters) {
    out.center_start.push_back(c.center_start);
    out.center_end.push_back(c.center_end);
  }
  return out;
}

MatchResult match_frames(const FrameDetections& prev, const FrameDetections& curr, double tau_d) {
  if (!(tau_d > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau_d must be positive");
  const std::size_t np = prev.size();
  const std::size_t nc = curr.size();

  MatchResult out;
  out.cost = CostMatrix(np, nc);
  for (std::size_t i = 0; i < np; ++i) {
    const Vec3 moved = transfer_center(prev.center_end[i], prev.pose, curr.pose);
    for (std::size_t j = 0; j < nc; ++j) out.cost(i, j) = (moved - curr.center_start[j]).norm();
  }
  const double pad = 2.0 * tau_d;
  out.cost.pad_to_square(pad);

  // Entries above the pad cost are saturated for the solver: any pair that
  // fails the gate then costs no less than leaving both sides unmatched,
  // so a far pair cannot displace a valid one.
  CostMatrix solver = out.cost;
  for (std::size_t r = 0; r < solver.rows(); ++r) {
    for (std::size_t c = 0; c < solver.cols(); ++c) solver(r, c) = std::min(solver(r, c), pad);
  }
  const Assignment assignment = hungarian(solver);

  std::vector<char> curr_matched(nc, 0);
  for (std::size_t i = 0; i < np; ++i) {
    const auto j = static_cast<std::size_t>(assignment.row_to_col[i]);
    if (j < nc && out.cost(i, j) <= tau_d) {
      out.matches.emplace_back(static_cast<int>(i), static_cast<int>(j));
      curr_matched[j] = 1;
    } else {
      out.deaths.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t j = 0; j < nc; ++j) {
    if (!curr_matched[j]) out.births.push_back(static_cast<int>(j));
  }
  return out;
}

const Track* TrackSet::find(int track_id) const {
  if (track_id < 0 || static_cast<std::size_t>(track_id) >= tracks.size()) return nullptr;
  return &tracks[static_cast<std::size_t>(track_id)];
}

const std::vector<int>& TrackBuilder::push(const FrameDetections& frame) {
  if (prev_ && frame.frame <= prev_->frame) {
    throw Error(ErrorKind::BadIndex, "frames must arrive in increasing order (got " + std::to_string(frame.frame) +
                                         " after " + std::to_string(prev_->frame) + ")");
  }
  const std::size_t retained = static_cast<std::size_t>(params_.history) + 1;
  std::vector<int>& ids = set_.assignments[frame.frame];
  ids.assign(frame.size(), -1);

  auto extend = [&](Track& track, int cluster) {
    track.entries.push_back({frame.frame, cluster, frame.pose.apply(frame.center_start[cluster])});
    while (track.entries.size() > retained) track.entries.pop_front();
    track.last_frame = frame.frame;
    ++track.observed;
    ids[cluster] = track.id;
  };

  std::vector<int> births;
  if (prev_) {
    const MatchResult m = match_frames(*prev_, frame, params_.tau_d);
    const std::vector<int>& prev_ids = set_.assignments.at(prev_->frame);
    for (const auto& [p, c] : m.matches) extend(set_.tracks[prev_ids[p]], c);
    for (int p : m.deaths) set_.tracks[prev_ids[p]].alive = false;
    births = m.births;
  } else {
    for (std::size_t c = 0; c < frame.size(); ++c) births.push_back(static_cast<int>(c));
  }
  for (int c : births) {
    Track track;
    track.id = static_cast<int>(set_.tracks.size());
    track.birth_frame = frame.frame;
    set_.tracks.push_back(std::move(track));
    extend(set_.tracks.back(), c);
  }
  prev_ = frame;
  return ids;
}

TrackSet assemble_tracks(std::span<const FrameDetections> frames, const AssocParams& params) {
  TrackBuilder builder(params);
  for (const FrameDetections& f : frames) builder.push(f);
  return builder.release();
}

}  // namespace cohere
