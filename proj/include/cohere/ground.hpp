#pragma once

#include "cohere/geom.hpp"

#include <span>
#include <vector>

namespace cohere {

/// Polar-grid line-fit ground segmentation parameters.
struct GroundParams {
  int n_segments = 180;
  double bin_width = 1.0;         // m
  double max_range = 60.0;        // m; points beyond are non-ground
  double max_slope = 0.15;        // |dz/dr| for a ground line
  double line_eps = 0.05;         // m, RMSE bound while extending a line
  double max_step = 0.1;          // m, largest offset of the next prototype from the current line
  double d_ground = 0.3;          // m, points at most this far above the line model are ground
  double max_start_height = 0.2;  // m, a new line must start near the previous one (or ground_z)
  double ground_z = 0.0;          // m, expected ground height at the ego origin

  bool operator==(const GroundParams&) const = default;
};

struct GroundLine {
  double r_begin = 0.0;
  double r_end = 0.0;
  double slope = 0.0;
  double intercept = 0.0;

  double height_at(double r) const { return slope * r + intercept; }
};

struct GroundLabeling {
  std::vector<bool> is_ground;  // aligned with Frame::merged_points
  GroundParams params;

  std::size_t ground_count() const;
};

/// Fits the per-segment line models only; exposed for inspection and tests.
std::vector<std::vector<GroundLine>> fit_ground_lines(std::span<const TaggedPoint> points, const GroundParams& params);

/// Throws EmptyInput for a frame without points.
GroundLabeling segment_ground(const Frame& frame, const GroundParams& params = {});
GroundLabeling segment_ground(std::span<const TaggedPoint> points, const GroundParams& params = {});

}  // namespace cohere
