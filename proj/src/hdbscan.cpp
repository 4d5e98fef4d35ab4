#include "cohere/hdbscan.hpp"

#include "cohere/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

namespace cohere {

namespace {

constexpr std::size_t kBruteForceBelow = 512;
// Zero-distance merges (duplicate points) get a finite lambda so that
// stabilities stay comparable.
constexpr double kMinDistance = 1e-12;

double lambda_of(double distance) { return 1.0 / std::max(distance, kMinDistance); }

double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

// CSR bucket grid over the xy-plane.
class BevGrid {
 public:
  BevGrid(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    x_min_ = y_min_ = std::numeric_limits<double>::infinity();
    double x_max = -x_min_, y_max = -y_min_;
    for (const Vec3& p : points) {
      x_min_ = std::min(x_min_, p.x());
      y_min_ = std::min(y_min_, p.y());
      x_max = std::max(x_max, p.x());
      y_max = std::max(y_max, p.y());
    }
    // Keep the dense cell array proportional to the point count.
    const double area_cells = ((x_max - x_min_) / cell_ + 1.0) * ((y_max - y_min_) / cell_ + 1.0);
    const double budget = 4.0 * static_cast<double>(points.size()) + 1024.0;
    if (area_cells > budget) cell_ *= std::sqrt(area_cells / budget);
    nx_ = static_cast<int>((x_max - x_min_) / cell_) + 1;
    ny_ = static_cast<int>((y_max - y_min_) / cell_) + 1;

    std::vector<int> cell_of(points.size());
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = flat(ix(points[i].x()), iy(points[i].y()));
      ++start_[cell_of[i] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    members_.resize(points.size());
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) members_[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  // Squared distance to the k-th nearest point (self included).
  double kth_squared(const Vec3& q, std::size_t k) const {
    std::priority_queue<double> heap;  // max-heap of the best k squared distances
    const int cx = ix(q.x());
    const int cy = iy(q.y());
    const int max_ring = std::max(nx_, ny_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      for (int gx = cx - ring; gx <= cx + ring; ++gx) {
        if (gx < 0 || gx >= nx_) continue;
        const bool edge_column = gx == cx - ring || gx == cx + ring;
        for (int gy = cy - ring; gy <= cy + ring; ++gy) {
          if (gy < 0 || gy >= ny_) continue;
          if (!edge_column && gy != cy - ring && gy != cy + ring) continue;
          const int c = flat(gx, gy);
          for (int m = start_[c]; m < start_[c + 1]; ++m) {
            const double d2 = squared_distance(q, points_[members_[m]]);
            if (heap.size() < k) {
              heap.push(d2);
            } else if (d2 < heap.top()) {
              heap.pop();
              heap.push(d2);
            }
          }
        }
      }
      if (heap.size() == k) {
        // Any unvisited point lies outside the scanned square.
        const double lo_x = x_min_ + (cx - ring) * cell_;
        const double hi_x = x_min_ + (cx + ring + 1) * cell_;
        const double lo_y = y_min_ + (cy - ring) * cell_;
        const double hi_y = y_min_ + (cy + ring + 1) * cell_;
        const double bound = std::min({q.x() - lo_x, hi_x - q.x(), q.y() - lo_y, hi_y - q.y()});
        if (bound * bound >= heap.top()) break;
      }
    }
    return heap.top();
  }

 private:
  int ix(double x) const { return std::clamp(static_cast<int>((x - x_min_) / cell_), 0, nx_ - 1); }
  int iy(double y) const { return std::clamp(static_cast<int>((y - y_min_) / cell_), 0, ny_ - 1); }
  int flat(int gx, int gy) const { return gy * nx_ + gx; }

  std::span<const Vec3> points_;
  double cell_;
  double x_min_, y_min_;
  int nx_ = 1, ny_ = 1;
  std::vector<int> start_;
  std::vector<int> members_;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void link(int child_root, int parent_root) { parent_[child_root] = parent_root; }

 private:
  std::vector<int> parent_;
};

struct LinkageNode {
  int left = -1;
  int right = -1;
  double distance = 0.0;
  int size = 1;
};

}  // namespace

std::vector<double> core_distances(std::span<const Vec3> points, int k, double grid_cell) {
  const std::size_t n = points.size();
  std::vector<double> core(n, 0.0);
  if (n == 0) return core;
  const std::size_t kk = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), 1, n);

  if (n < kBruteForceBelow) {
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d2[j] = squared_distance(points[i], points[j]);
      std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(kk - 1), d2.end());
      core[i] = std::sqrt(d2[kk - 1]);
    }
    return core;
  }
  const BevGrid grid(points, grid_cell);
  for (std::size_t i = 0; i < n; ++i) core[i] = std::sqrt(grid.kth_squared(points[i], kk));
  return core;
}

std::vector<MstEdge> mutual_reachability_mst(std::span<const Vec3> points, std::span<const double> core) {
  const std::size_t n = points.size();
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  std::vector<double> xs(n), ys(n), zs(n), core2(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = points[i].x();
    ys[i] = points[i].y();
    zs[i] = points[i].z();
    core2[i] = core[i] * core[i];
  }
  // Remaining vertices, their best squared weight and the tree vertex it came from.
  std::vector<int> remaining(n - 1);
  std::iota(remaining.begin(), remaining.end(), 1);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<int> from(n, 0);

  int current = 0;
  while (!remaining.empty()) {
    const double cx = xs[current], cy = ys[current], cz = zs[current], cc = core2[current];
    std::size_t pick = 0;
    double pick_w = std::numeric_limits<double>::infinity();
    int pick_v = std::numeric_limits<int>::max();
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      const int v = remaining[r];
      const double dx = xs[v] - cx, dy = ys[v] - cy, dz = zs[v] - cz;
      const double w = std::max({dx * dx + dy * dy + dz * dz, cc, core2[v]});
      if (w < best[v] || (w == best[v] && current < from[v])) {
        best[v] = w;
        from[v] = current;
      }
      if (best[v] < pick_w || (best[v] == pick_w && v < pick_v)) {
        pick_w = best[v];
        pick_v = v;
        pick = r;
      }
    }
    edges.push_back({std::min(from[pick_v], pick_v), std::max(from[pick_v], pick_v), std::sqrt(pick_w)});
    remaining[pick] = remaining.back();
    remaining.pop_back();
    current = pick_v;
  }
  return edges;
}

CondensedTree condense_tree(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size) {
  CondensedTree tree;
  tree.point_cluster.assign(n_points, 0);
  tree.point_lambda.assign(n_points, 0.0);
  tree.clusters.push_back({-1, 0.0, 0.0, n_points, {}});
  if (n_points == 0) return tree;
  if (n_points == 1) {
    tree.point_lambda[0] = lambda_of(0.0);
    tree.clusters[0].stability = tree.point_lambda[0];
    return tree;
  }

  // Single-linkage dendrogram: leaves 0..n-1, merges n..2n-2.
  std::vector<MstEdge> sorted = mst;
  std::sort(sorted.begin(), sorted.end(), [](const MstEdge& l, const MstEdge& r) {
    if (l.weight != r.weight) return l.weight < r.weight;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
  std::vector<LinkageNode> nodes(2 * static_cast<std::size_t>(n_points) - 1);
  UnionFind uf(nodes.size());
  int next = n_points;
  for (const MstEdge& e : sorted) {
    const int ra = uf.find(e.a);
    const int rb = uf.find(e.b);
    nodes[next] = {ra, rb, e.weight, nodes[ra].size + nodes[rb].size};
    uf.link(ra, next);
    uf.link(rb, next);
    ++next;
  }
  if (next != 2 * n_points - 1) throw Error(ErrorKind::ShapeMismatch, "MST does not span all points");

  auto leaves_of = [&](int node, auto&& visit) {
    std::vector<int> stack{node};
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      if (cur < n_points) {
        visit(cur);
      } else {
        stack.push_back(nodes[cur].right);
        stack.push_back(nodes[cur].left);
      }
    }
  };

  // Depth-first over the dendrogram carrying the condensed cluster id.
  std::vector<std::pair<int, int>> work{{next - 1, 0}};
  while (!work.empty()) {
    const auto [node, cluster] = work.back();
    work.pop_back();
    const LinkageNode& ln = nodes[node];
    const double lambda = lambda_of(ln.distance);
    const int sizes[2] = {nodes[ln.left].size, nodes[ln.right].size};
    const int kids[2] = {ln.left, ln.right};
    const bool big[2] = {sizes[0] >= min_cluster_size, sizes[1] >= min_cluster_size};

    if (big[0] && big[1]) {
      for (int side = 0; side < 2; ++side) {
        const int id = static_cast<int>(tree.clusters.size());
        tree.clusters.push_back({cluster, lambda, 0.0, sizes[side], {}});
        tree.clusters[cluster].children.push_back(id);
        if (kids[side] >= n_points) {
          work.emplace_back(kids[side], id);
        } else {
          tree.point_cluster[kids[side]] = id;
          tree.point_lambda[kids[side]] = lambda;
        }
      }
      continue;
    }
    for (int side = 0; side < 2; ++side) {
      if (big[side]) {
        work.emplace_back(kids[side], cluster);
      } else {
        leaves_of(kids[side], [&](int leaf) {
          tree.point_cluster[leaf] = cluster;
          tree.point_lambda[leaf] = lambda;
        });
      }
    }
  }

  for (int p = 0; p < n_points; ++p) {
    CondensedCluster& c = tree.clusters[tree.point_cluster[p]];
    c.stability += tree.point_lambda[p] - c.birth_lambda;
  }
  for (std::size_t id = 1; id < tree.clusters.size(); ++id) {
    const CondensedCluster& c = tree.clusters[id];
    CondensedCluster& parent = tree.clusters[c.parent];
    parent.stability += (c.birth_lambda - parent.birth_lambda) * c.size;
  }
  return tree;
}

std::vector<int> select_clusters(const CondensedTree& tree, bool allow_single_cluster) {
  const std::size_t n = tree.clusters.size();
  std::vector<double> best(n, 0.0);
  std::vector<char> selected(n, 0);
  // Children always carry larger ids than their parent.
  for (std::size_t i = n; i-- > 0;) {
    const CondensedCluster& c = tree.clusters[i];
    double subtree = 0.0;
    for (int child : c.children) subtree += best[child];
    const bool eligible = i != 0 || allow_single_cluster;
    if (!eligible || (!c.children.empty() && subtree > c.stability)) {
      best[i] = subtree;
      continue;
    }
    best[i] = c.stability;
    selected[i] = 1;
    std::vector<int> stack(c.children.begin(), c.children.end());
    while (!stack.empty()) {
      const int d = stack.back();
      stack.pop_back();
      selected[d] = 0;
      stack.insert(stack.end(), tree.clusters[d].children.begin(), tree.clusters[d].children.end());
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (selected[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

HdbscanResult hdbscan(std::span<const Vec3> points, const HdbscanParams& params) {
  if (params.min_cluster_size < 2) {
    throw Error(ErrorKind::InvalidConfig, "min_cluster_size must be >= 2, got " + std::to_string(params.min_cluster_size));
  }
  if (params.min_samples < 1) throw Error(ErrorKind::InvalidConfig, "min_samples must be >= 1");
  for (const Vec3& p : points) {
    if (!p.allFinite()) throw Error(ErrorKind::EmptyInput, "non-finite point passed to hdbscan");
  }

  HdbscanResult result;
  const int n = static_cast<int>(points.size());
  result.labels.assign(n, -1);
  if (n < params.min_cluster_size) return result;

  result.core_distances = core_distances(points, params.min_samples, params.grid_cell);
  result.mst = mutual_reachability_mst(points, result.core_distances);
  result.tree = condense_tree(result.mst, n, params.min_cluster_size);
  result.selected = select_clusters(result.tree, params.allow_single_cluster);

  // Map every condensed node to its selected ancestor (or -1).
  std::vector<int> owner(result.tree.clusters.size(), -1);
  std::vector<char> is_selected(result.tree.clusters.size(), 0);
  for (int s : result.selected) is_selected[s] = 1;
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (is_selected[i]) {
      owner[i] = static_cast<int>(i);
    } else if (i > 0) {
      owner[i] = owner[result.tree.clusters[i].parent];
    }
  }
  // Labels numbered by first appearance in input order.
  std::vector<int> relabel(result.tree.clusters.size(), -1);
  for (int p = 0; p < n; ++p) {
    const int o = owner[result.tree.point_cluster[p]];
    if (o < 0) continue;
    if (relabel[o] < 0) relabel[o] = result.n_clusters++;
    result.labels[p] = relabel[o];
  }
  return result;
}

}  // namespace cohere
