#pragma once

#include "cohere/geom.hpp"

#include <span>
#include <vector>

namespace cohere {

struct HdbscanParams {
  int min_cluster_size = 10;
  int min_samples = 10;
  /// Lets the root of the condensed tree be selected, so a single dense
  /// group (or a frame holding one object) yields one cluster.
  bool allow_single_cluster = true;
  /// BEV cell edge of the k-NN grid index, meters.
  double grid_cell = 1.0;

  bool operator==(const HdbscanParams&) const = default;
};

struct MstEdge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

/// One cluster node of the condensed tree. Node 0 is the root.
struct CondensedCluster {
  int parent = -1;
  double birth_lambda = 0.0;
  double stability = 0.0;
  int size = 0;
  std::vector<int> children;
};

struct CondensedTree {
  std::vector<CondensedCluster> clusters;
  /// Cluster each point leaves, and the lambda (1 / distance) at which it does.
  std::vector<int> point_cluster;
  std::vector<double> point_lambda;
};

struct HdbscanResult {
  std::vector<int> labels;  // -1 = noise, otherwise 0..n_clusters-1
  int n_clusters = 0;
  std::vector<double> core_distances;
  std::vector<MstEdge> mst;
  CondensedTree tree;
  std::vector<int> selected;  // condensed-tree node ids, ascending
};

/// Distance to the k-th nearest point, counting the point itself as the
/// first (k is clamped to the point count). Exact; uses a BEV grid index
/// above 512 points.
std::vector<double> core_distances(std::span<const Vec3> points, int k, double grid_cell = 1.0);

/// Minimum spanning tree of the mutual-reachability graph
/// max(core_a, core_b, |a - b|). Ties go to the lowest vertex index.
std::vector<MstEdge> mutual_reachability_mst(std::span<const Vec3> points, std::span<const double> core);

CondensedTree condense_tree(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size);

/// Excess-of-mass selection maximizing total stability over antichains of
/// the condensed tree. Returns selected node ids in ascending order.
std::vector<int> select_clusters(const CondensedTree& tree, bool allow_single_cluster);

/// Fewer points than min_cluster_size yields all noise.
HdbscanResult hdbscan(std::span<const Vec3> points, const HdbscanParams& params = {});

}  // namespace cohere
