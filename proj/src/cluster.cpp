#include "cohere/cluster.hpp"

#include "cohere/error.hpp"

#include <algorithm>
#include <cmath>

namespace cohere {

namespace {

Vec3 mean_of(const Frame& frame, const std::vector<std::size_t>& idx) {
  Vec3 sum = Vec3::Zero();
  for (std::size_t i : idx) sum += frame.merged_points[i].point.vec();
  return sum / static_cast<double>(idx.size());
}

}  // namespace

ClusteringResult identify_instances(const Frame& frame, const GroundLabeling& ground, const ClusterParams& params) {
  if (ground.is_ground.size() != frame.merged_points.size()) {
    throw Error(ErrorKind::ShapeMismatch, "ground labeling does not match the frame's point count");
  }
  if (params.tau_n < 1) throw Error(ErrorKind::InvalidConfig, "tau_n must be >= 1");

  std::vector<std::size_t> candidates;
  std::vector<Vec3> coords;
  for (std::size_t i = 0; i < frame.merged_points.size(); ++i) {
    const Point3& p = frame.merged_points[i].point;
    if (ground.is_ground[i] || std::hypot(p.x, p.y) > params.max_range) continue;
    candidates.push_back(i);
    coords.push_back(p.vec());
  }

  ClusteringResult result;
  if (candidates.empty()) return result;

  const HdbscanResult h = hdbscan(coords, params.hdbscan);
  std::vector<std::vector<std::size_t>> groups(h.n_clusters);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (h.labels[c] < 0) {
      result.noise.push_back(candidates[c]);
    } else {
      groups[h.labels[c]].push_back(candidates[c]);
    }
  }

  // hdbscan numbers labels by first appearance, so groups are already
  // ordered by their lowest point index.
  const std::uint32_t first = frame.first_sweep();
  const std::uint32_t last = frame.last_sweep();
  for (auto& members : groups) {
    Cluster cluster;
    for (std::size_t i : members) {
      const std::uint32_t s = frame.merged_points[i].sweep;
      if (s == first) cluster.first_scan.push_back(i);
      if (s == last) cluster.last_scan.push_back(i);
    }
    const auto tau = static_cast<std::size_t>(params.tau_n);
    if (cluster.first_scan.size() < tau || cluster.last_scan.size() < tau) {
      ++result.discarded;
      result.noise.insert(result.noise.end(), members.begin(), members.end());
      continue;
    }
    cluster.id = static_cast<int>(result.clusters.size());
    cluster.center_start = mean_of(frame, cluster.first_scan);
    cluster.center_end = mean_of(frame, cluster.last_scan);
    cluster.points = std::move(members);
    result.clusters.push_back(std::move(cluster));
  }
  std::sort(result.noise.begin(), result.noise.end());
  return result;
}

}  // namespace cohere
