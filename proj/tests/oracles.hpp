#pragma once

// Independent reference implementations. Each one is written the slow,
// obvious way and shares no code with the library beyond its data types.

#include "cohere/bev.hpp"
#include "cohere/geom.hpp"
#include "cohere/hdbscan.hpp"
#include "cohere/hungarian.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

namespace oracle {

using cohere::Vec3;

// Minimum over all n! permutations, costs summed in row order.
inline double min_assignment_cost(const cohere::CostMatrix& c) {
  std::vector<int> perm(c.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) total += c(r, perm[r]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Sorted distances to every point (itself included), k-th smallest.
inline std::vector<double> core_distances(const std::vector<Vec3>& pts, int k) {
  std::vector<double> out;
  for (const Vec3& p : pts) {
    std::vector<double> d;
    for (const Vec3& q : pts) d.push_back(distance(p, q));
    std::sort(d.begin(), d.end());
    out.push_back(d[std::min<std::size_t>(static_cast<std::size_t>(k), d.size()) - 1]);
  }
  return out;
}

// Textbook Prim on the full mutual-reachability matrix; returns the sorted
// edge weights (the weight multiset is the same for every MST).
inline std::vector<double> prim_weights(const std::vector<Vec3>& pts, const std::vector<double>& core) {
  const std::size_t n = pts.size();
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i][j] = std::max({core[i], core[j], distance(pts[i], pts[j])});
  }
  std::vector<bool> in(n, false);
  std::vector<double> key(n, std::numeric_limits<double>::infinity());
  std::vector<double> weights;
  key[0] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in[v] && (u == n || key[v] < key[u])) u = v;
    }
    in[u] = true;
    if (it > 0) weights.push_back(key[u]);
    for (std::size_t v = 0; v < n; ++v) {
      if (!in[v] && w[u][v] < key[v]) key[v] = w[u][v];
    }
  }
  std::sort(weights.begin(), weights.end());
  return weights;
}

// Adjusted Rand index from the contingency table (noise is its own label).
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto pairs = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [key, n] : table) index += pairs(n);
  for (const auto& [key, n] : rows) sum_rows += pairs(n);
  for (const auto& [key, n] : cols) sum_cols += pairs(n);
  const double expected = sum_rows * sum_cols / pairs(static_cast<double>(a.size()));
  const double max_index = (sum_rows + sum_cols) / 2;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

struct Selection {
  double best = -1.0;
  std::vector<int> nodes;
  int optimal_count = 0;  // how many selections reach `best` (within 1e-12 relative)
};

// Every set of condensed nodes covering each leaf exactly once (an
// antichain reaching all leaves), scored by summed stability.
inline Selection exhaustive_selection(const cohere::CondensedTree& tree, bool allow_single_cluster) {
  const int n = static_cast<int>(tree.clusters.size());
  std::vector<std::vector<int>> ancestors(n);
  for (int i = 0; i < n; ++i) {
    for (int a = i; a >= 0; a = tree.clusters[a].parent) ancestors[i].push_back(a);
  }
  std::vector<int> leaves;
  for (int i = 0; i < n; ++i) {
    if (tree.clusters[i].children.empty()) leaves.push_back(i);
  }
  std::vector<std::pair<double, std::vector<int>>> scored;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    if ((mask & 1u) && !allow_single_cluster) continue;
    bool ok = true;
    for (int leaf : leaves) {
      int hits = 0;
      for (int a : ancestors[leaf]) hits += (mask >> a) & 1u;
      if (hits != 1) ok = false;
    }
    if (!ok) continue;
    double total = 0.0;
    std::vector<int> nodes;
    for (int i = 0; i < n; ++i) {
      if ((mask >> i) & 1u) {
        total += tree.clusters[i].stability;
        nodes.push_back(i);
      }
    }
    scored.emplace_back(total, nodes);
  }
  // A lone root with the root excluded: nothing is selected.
  if (scored.empty()) scored.emplace_back(0.0, std::vector<int>{});
  Selection out;
  for (const auto& [total, nodes] : scored) {
    if (total > out.best) {
      out.best = total;
      out.nodes = nodes;
    }
  }
  for (const auto& [total, nodes] : scored) {
    if (std::abs(total - out.best) <= 1e-12 * std::max(1.0, std::abs(out.best))) ++out.optimal_count;
  }
  return out;
}

// Weights from the fractional offsets to the surrounding cell centers.
inline Eigen::VectorXd bilinear(const cohere::FeatureMap& map, double x, double y) {
  const cohere::BevGeometry& g = map.geometry();
  const double u = (x - g.x_min) / g.cell - 0.5;
  const double v = (y - g.y_min) / g.cell - 0.5;
  const int c0 = std::min(static_cast<int>(std::floor(u)), map.width() - 2);
  const int r0 = std::min(static_cast<int>(std::floor(v)), map.height() - 2);
  const double fx = u - c0, fy = v - r0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(map.channels());
  for (int c = 0; c < map.channels(); ++c) {
    out[c] = (1 - fx) * (1 - fy) * map.at(r0, c0)[c] + fx * (1 - fy) * map.at(r0, c0 + 1)[c] +
             (1 - fx) * fy * map.at(r0 + 1, c0)[c] + fx * fy * map.at(r0 + 1, c0 + 1)[c];
  }
  return out;
}

// Sum over pixels and bins whose ray point lands inside the extent of
// p * |feature|_1, recomputing the ray with plain pinhole algebra.
inline double splat_mass(const cohere::ImageFeatures& image, const std::vector<cohere::DepthDistribution>& depths,
                         const cohere::DepthBins& bins, const cohere::CameraModel& cam,
                         const cohere::BevGeometry& g) {
  double total = 0.0;
  for (int h = 0; h < image.height; ++h) {
    for (int w = 0; w < image.width; ++w) {
      double l1 = 0.0;
      for (double f : image.pixel(h, w)) l1 += std::abs(f);
      const auto& d = depths[static_cast<std::size_t>(h) * image.width + w];
      for (std::size_t k = 0; k < d.p.size(); ++k) {
        const double z = bins.d0 + static_cast<double>(k + 1) * bins.delta;
        const Vec3 local((w - cam.cx) / cam.fx * z, (h - cam.cy) / cam.fy * z, z);
        const Vec3 ego = cam.extrinsic.rotation() * local + cam.extrinsic.translation();
        if (ego.x() >= g.x_min && ego.x() < g.x_max && ego.y() >= g.y_min && ego.y() < g.y_max) {
          total += d.p[k] * l1;
        }
      }
    }
  }
  return total;
}

inline Eigen::VectorXd mean(const std::vector<Eigen::VectorXd>& rows) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows.front().size());
  for (const auto& r : rows) {
    for (Eigen::Index c = 0; c < r.size(); ++c) sum[c] += r[c];
  }
  for (Eigen::Index c = 0; c < sum.size(); ++c) sum[c] /= static_cast<double>(rows.size());
  return sum;
}

// Central differences of a scalar function of a vector.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace oracle
