#pragma once

#include "cohere/geom.hpp"
#include "cohere/ground.hpp"
#include "cohere/hdbscan.hpp"

#include <cstddef>
#include <vector>

namespace cohere {

struct ClusterParams {
  HdbscanParams hdbscan;
  int tau_n = 5;            // minimum points in both the first and the last scan
  double max_range = 60.0;  // m, planar range filter applied before clustering

  bool operator==(const ClusterParams&) const = default;
};

/// One instance of a frame. Index lists point into Frame::merged_points.
struct Cluster {
  int id = 0;
  std::vector<std::size_t> points;
  std::vector<std::size_t> first_scan;
  std::vector<std::size_t> last_scan;
  Vec3 center_start = Vec3::Zero();  // mean of first_scan, frame coordinates
  Vec3 center_end = Vec3::Zero();    // mean of last_scan, frame coordinates
};

struct ClusteringResult {
  std::vector<Cluster> clusters;
  std::vector<std::size_t> noise;  // includes points of discarded clusters
  std::size_t discarded = 0;
};

/// Clusters non-ground in-range points and keeps clusters with >= tau_n
/// points in both end scans. Valid clusters are numbered in order of their
/// lowest point index.
ClusteringResult identify_instances(const Frame& frame, const GroundLabeling& ground, const ClusterParams& params = {});

}  // namespace cohere
