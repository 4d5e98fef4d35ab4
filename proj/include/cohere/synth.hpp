#pragma once

#include "cohere/bev.hpp"
#include "cohere/geom.hpp"
#include "cohere/learn.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cohere {

/// Upright box moving at constant velocity; position is the footprint
/// center in world coordinates at t = 0.
struct BoxObject {
  Vec3 size{4.0, 1.8, 1.5};  // length (along yaw), width, height
  Eigen::Vector2d position{0.0, 0.0};
  double yaw = 0.0;
  double elevation = 0.0;  // bottom face height above ground
  Eigen::Vector2d velocity{0.0, 0.0};

  bool operator==(const BoxObject&) const = default;
};

struct EgoMotion {
  Eigen::Vector2d position{0.0, 0.0};
  double yaw = 0.0;
  Eigen::Vector2d velocity{0.0, 0.0};  // world frame, m/s
  double yaw_rate = 0.0;               // rad/s

  bool operator==(const EgoMotion&) const = default;
};

struct SceneSpec {
  std::uint64_t seed = 42;
  int frames = 17;
  int sweeps_per_frame = 10;
  double sweep_interval = 0.05;  // s
  double frame_interval = 0.5;   // s
  EgoMotion ego;
  std::vector<BoxObject> objects;
  double noise_sigma = 0.02;     // m, per coordinate, ground and objects
  int points_per_object = 60;    // per sweep
  int ground_points = 500;       // per sweep
  double ground_radius = 40.0;   // m, ground disk around the ego
  double sensor_range = 50.0;    // m, objects farther than this emit nothing
  double speed_bound = 0.5;      // m; warn when an object moves more between end scans
  /// Each object carries points_per_object surface samples that wander
  /// sinusoidally across their face by up to this many meters, so nearby
  /// sweeps hit nearly the same spots. 0 repeats one fixed pattern.
  double surface_drift = 0.5;

  /// Time between the last sweep of one frame and the first of the next.
  double end_scan_gap() const { return frame_interval - (sweeps_per_frame - 1) * sweep_interval; }
  double sweep_time(int frame, int sweep) const { return frame * frame_interval + sweep * sweep_interval; }

  bool operator==(const SceneSpec&) const = default;
};

/// Eight objects (cars, pedestrians, a cyclist) around an ego driving
/// +x at 2 m/s: 17 frames at 2 Hz with 10 sweeps each.
SceneSpec default_scene();

/// Throws InvalidScene for malformed specs or boxes overlapping at t = 0;
/// returns warnings (objects exceeding the speed bound).
std::vector<std::string> validate_scene(const SceneSpec& spec);

struct InstanceTruth {
  int object = 0;
  Vec3 start_ego = Vec3::Zero();  // centroid of the noise-free samples, first sweep, frame coordinates
  Vec3 end_ego = Vec3::Zero();
  Vec3 start_world = Vec3::Zero();
  Vec3 end_world = Vec3::Zero();
};

struct FrameTruth {
  int frame = 0;
  std::vector<int> point_labels;  // aligned with merged_points: object id, or -1 for ground
  std::vector<InstanceTruth> instances;  // objects emitting points in both end sweeps
};

struct GroundTruth {
  std::vector<FrameTruth> frames;
  /// object id -> frames in which it is an instance.
  std::map<int, std::vector<int>> trajectories;
};

struct Scene {
  std::vector<Frame> frames;
  GroundTruth truth;
  std::vector<std::string> warnings;
};

/// Noise-free object-local surface samples (sides and top) of `object` at
/// global sweep index frame * sweeps_per_frame + sweep.
std::vector<Vec3> surface_points(const SceneSpec& spec, int object, long sweep);

/// World pose of an object at time t.
Pose object_pose(const BoxObject& object, double t);
Pose ego_pose(const EgoMotion& ego, double t);

/// Deterministic per seed regardless of `threads`.
Scene generate(const SceneSpec& spec, int threads = 1);

/// Synthetic camera rig used to drive pretraining.
struct CameraRigSpec {
  int cameras = 4;              // evenly spaced in yaw, first one facing +x
  int height = 24;
  int width = 32;
  double focal = 16.0;          // px
  double mount_height = 1.5;    // m
  double depth_sigma = 2.0;     // bins, spread of the estimated depth
  double depth_bias = 1.5;      // bins, std of the per-pixel estimate offset

  bool operator==(const CameraRigSpec&) const = default;
};

/// Renders per-pixel features [hit, height / 2, intensity] from the
/// frame's points (nearest return per pixel), a blurred and biased
/// estimated depth distribution, and k_gt where a return exists.
std::vector<CameraView> render_views(const Frame& frame, const CameraRigSpec& rig, const DepthBins& bins,
                                     std::uint64_t seed);

}  // namespace cohere
