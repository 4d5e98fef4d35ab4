#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace cohere {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  Vec3 vec() const { return {x, y, z}; }
  static Point3 from(const Vec3& v, double intensity = 0.0) { return {v.x(), v.y(), v.z(), intensity}; }
  bool finite() const;
};

/// Rigid transform mapping a local frame into a parent frame: x_parent = R x_local + p.
class Pose {
 public:
  Pose() = default;
  /// Throws BadPose unless R is orthonormal with det +1 (1e-9) and p is finite.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  /// Unit quaternion (w, x, y, z); norm deviation above 1e-6 is rejected.
  static Pose from_quaternion(double w, double x, double y, double z, const Vec3& translation);
  static Pose from_yaw(double yaw, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }

  Vec3 apply(const Vec3& v) const { return rotation_ * v + translation_; }
  Pose inverse() const;
  /// (*this) ∘ other: apply `other` first.
  Pose operator*(const Pose& other) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

struct Sweep {
  double timestamp = 0.0;
  std::vector<Point3> points;
  Pose pose;  // sweep ego -> world
};

struct TaggedPoint {
  Point3 point;
  std::uint32_t sweep = 0;
};

struct Frame {
  int index = 0;
  std::vector<Sweep> sweeps;
  Pose frame_pose;  // pose of the last sweep; reference coordinates for merged_points
  std::vector<TaggedPoint> merged_points;

  std::uint32_t first_sweep() const { return 0; }
  std::uint32_t last_sweep() const { return static_cast<std::uint32_t>(sweeps.size() - 1); }
};

/// Merges all sweeps into the ego coordinates of the last sweep.
/// Throws FrameUnderfilled (< 2 sweeps), EmptyInput (empty sweep) or
/// BadPose (non-finite point, non-monotone timestamps).
Frame compose_frame(std::vector<Sweep> sweeps, int index = 0);

/// Relative ego motion (R, p) from the previous frame to the current one,
/// expressed in the previous frame: pose_prev^-1 * pose_curr.
Pose relative_motion(const Pose& pose_prev, const Pose& pose_curr);

/// Re-expresses a center from the previous frame's ego coordinates in the
/// current frame's: R^T c - R^T p with (R, p) = relative_motion(prev, curr).
Vec3 transfer_center(const Vec3& center, const Pose& pose_prev, const Pose& pose_curr);

}  // namespace cohere
