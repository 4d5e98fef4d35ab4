#pragma once

#include "cohere/geom.hpp"
#include "cohere/rng.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

using cohere::Vec3;

inline cohere::Pose random_pose(std::mt19937_64& rng, double reach = 10.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return cohere::Pose(q.toRotationMatrix(), Vec3(n(rng), n(rng), n(rng)) * reach);
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  const double x = u(rng), y = u(rng), z = u(rng);
  return {x, y, z};
}

inline cohere::Sweep sweep_of(double t, const std::vector<Vec3>& pts, const cohere::Pose& pose = {}) {
  cohere::Sweep s;
  s.timestamp = t;
  s.pose = pose;
  for (const Vec3& p : pts) s.points.push_back(cohere::Point3::from(p));
  return s;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cohere_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
