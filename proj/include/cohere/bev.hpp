#pragma once

#include "cohere/cluster.hpp"
#include "cohere/geom.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace cohere {

/// Metric extent and resolution of a BEV grid. Column j covers
/// [x_min + j*cell, x_min + (j+1)*cell); row i covers the same along y.
struct BevGeometry {
  double x_min = -51.2;
  double x_max = 51.2;
  double y_min = -51.2;
  double y_max = 51.2;
  double cell = 0.8;

  int width() const;
  int height() const;
  /// Cell containing (x, y), or nullopt outside the extent.
  std::optional<std::pair<int, int>> cell_of(double x, double y) const;  // (row, col)
  Eigen::Vector2d cell_center(int row, int col) const;
  void validate() const;

  bool operator==(const BevGeometry&) const = default;
};

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(const BevGeometry& geometry, int channels);

  const BevGeometry& geometry() const { return geometry_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  std::span<double> at(int row, int col) {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> at(int row, int col) const {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)};
  }
  Eigen::Map<const Eigen::VectorXd> vec(int row, int col) const { return {data_.data() + offset(row, col), channels_}; }
  Eigen::Map<Eigen::VectorXd> vec(int row, int col) { return {data_.data() + offset(row, col), channels_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * width_ + col) * static_cast<std::size_t>(channels_);
  }

  BevGeometry geometry_;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;  // row-major H x W x C
};

/// The four cells around a point and their interpolation weights, in the
/// order (r0,c0), (r0,c0+1), (r0+1,c0), (r0+1,c0+1).
struct BilinearStencil {
  std::array<int, 4> rows{};
  std::array<int, 4> cols{};
  std::array<double, 4> weights{};
};

/// Throws OutOfBounds unless (x, y) lies between the outermost cell centers.
BilinearStencil bilinear_stencil(const BevGeometry& geometry, double x, double y);
Eigen::VectorXd sample_bilinear(const FeatureMap& map, double x, double y);

/// Discrete depths d0 + k*delta, k = 1..count.
struct DepthBins {
  int count = 60;
  double d0 = 1.0;
  double delta = 1.0;

  double depth(std::size_t k) const { return d0 + static_cast<double>(k) * delta; }
  /// 1-based bin nearest to `depth`, or nullopt outside the covered range.
  std::optional<std::size_t> index_of(double depth) const;

  bool operator==(const DepthBins&) const = default;
};

struct DepthDistribution {
  std::vector<double> p;               // p[0] is bin k = 1
  std::optional<std::size_t> k_gt;     // 1-based ground-truth bin

  double sum() const;
  /// 1-based argmax; ties resolve to k_gt when it is among the maxima,
  /// else to the lowest index.
  std::size_t argmax() const;
};

/// Sets p[k_gt] = 1 and renormalizes. k_gt is 1-based; throws BadIndex when
/// out of range and NotNormalized when `est` does not sum to 1 (1e-6).
DepthDistribution merge_depth(const DepthDistribution& est, std::size_t k_gt);

/// Zeroes each bin independently with probability r. Not renormalized.
DepthDistribution dropout_mask(const DepthDistribution& est, double r, std::mt19937_64& rng);
DepthDistribution dropout_mask(const DepthDistribution& est, double r, std::uint64_t seed);

/// Pinhole camera; optical axis +z, image x right, y down. Pixel (h, w)
/// sits at image coordinates (u, v) = (w, h).
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Pose extrinsic;  // camera -> ego

  /// Ego-frame point on the ray through (u, v) at z-depth `depth`.
  Vec3 ray_point(double u, double v, double depth) const;
  void validate() const;
};

struct ImageFeatures {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // row-major H x W x C

  ImageFeatures() = default;
  ImageFeatures(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}
  std::span<double> pixel(int h, int w) {
    return {data.data() + (static_cast<std::size_t>(h) * width + w) * channels, static_cast<std::size_t>(channels)};
  }
  std::span<const double> pixel(int h, int w) const {
    return {data.data() + (static_cast<std::size_t>(h) * width + w) * channels, static_cast<std::size_t>(channels)};
  }
};

/// Scatter-adds p^k-weighted pixel features into the BEV cell under each
/// (pixel, depth bin) ray point; mass outside the grid is dropped.
/// `depths` is row-major over pixels.
FeatureMap lift_splat(const ImageFeatures& image, std::span<const DepthDistribution> depths, const DepthBins& bins,
                      const CameraModel& camera, const BevGeometry& target);

/// Adds the splat of another camera into `map` (same geometry and channels).
void lift_splat_into(FeatureMap& map, const ImageFeatures& image, std::span<const DepthDistribution> depths,
                     const DepthBins& bins, const CameraModel& camera);

struct OccupancyGrid {
  int height = 0;
  int width = 0;
  std::vector<char> cells;

  bool at(int row, int col) const { return cells[static_cast<std::size_t>(row) * width + col] != 0; }
  std::size_t count() const;
};

/// Marks cells holding a point of any valid cluster, dilated by `dilation`
/// cells over the 8-neighborhood.
OccupancyGrid occupancy_mask(const BevGeometry& geometry, const Frame& frame, const ClusteringResult& clusters,
                             int dilation = 1);
OccupancyGrid occupancy_mask(const BevGeometry& geometry, std::span<const Vec3> points, int dilation = 1);

}  // namespace cohere
