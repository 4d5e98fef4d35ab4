#include "cohere/geom.hpp"

#include "cohere/error.hpp"

#include <cmath>
#include <string>

namespace cohere {

namespace {

constexpr double kOrthoTol = 1e-9;
constexpr double kQuatNormTol = 1e-6;

}  // namespace

bool Point3::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(intensity);
}

Pose::Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
  if (!rotation_.allFinite() || !translation_.allFinite()) {
    throw Error(ErrorKind::BadPose, "non-finite pose entries");
  }
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation_.determinant();
  if (ortho > kOrthoTol || std::abs(det - 1.0) > kOrthoTol) {
    throw Error(ErrorKind::BadPose,
                "rotation not orthonormal (|R^T R - I| = " + std::to_string(ortho) + ", det = " + std::to_string(det) + ")");
  }
}

Pose Pose::from_quaternion(double w, double x, double y, double z, const Vec3& translation) {
  const double norm = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > kQuatNormTol) {
    throw Error(ErrorKind::BadPose, "quaternion norm " + std::to_string(norm) + " deviates from 1");
  }
  Eigen::Quaterniond q(w / norm, x / norm, y / norm, z / norm);
  return Pose(q.toRotationMatrix(), translation);
}

Pose Pose::from_yaw(double yaw, const Vec3& translation) {
  return Pose(Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), translation);
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation_ = rotation_ * other.rotation_;
  out.translation_ = rotation_ * other.translation_ + translation_;
  return out;
}

Frame compose_frame(std::vector<Sweep> sweeps, int index) {
  if (sweeps.size() < 2) {
    throw Error(ErrorKind::FrameUnderfilled, "frame " + std::to_string(index) + " has " +
                                                 std::to_string(sweeps.size()) + " sweep(s), need >= 2");
  }
  std::size_t total = 0;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    if (sweeps[s].points.empty()) {
      throw Error(ErrorKind::EmptyInput, "sweep " + std::to_string(s) + " of frame " + std::to_string(index) + " is empty");
    }
    if (s > 0 && !(sweeps[s].timestamp > sweeps[s - 1].timestamp)) {
      throw Error(ErrorKind::BadPose, "sweep timestamps not strictly increasing in frame " + std::to_string(index));
    }
    total += sweeps[s].points.size();
  }

  Frame frame;
  frame.index = index;
  frame.frame_pose = sweeps.back().pose;
  const Pose world_to_ref = frame.frame_pose.inverse();
  frame.merged_points.reserve(total);
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    const Pose to_ref = world_to_ref * sweeps[s].pose;
    for (const Point3& p : sweeps[s].points) {
      if (!p.finite()) {
        throw Error(ErrorKind::BadPose, "non-finite point in sweep " + std::to_string(s));
      }
      frame.merged_points.push_back({Point3::from(to_ref.apply(p.vec()), p.intensity), static_cast<std::uint32_t>(s)});
    }
  }
  frame.sweeps = std::move(sweeps);
  return frame;
}

Pose relative_motion(const Pose& pose_prev, const Pose& pose_curr) {
  return pose_prev.inverse() * pose_curr;
}

Vec3 transfer_center(const Vec3& center, const Pose& pose_prev, const Pose& pose_curr) {
  const Pose motion = relative_motion(pose_prev, pose_curr);
  const Mat3 rt = motion.rotation().transpose();
  return rt * center - rt * motion.translation();
}

}  // namespace cohere
