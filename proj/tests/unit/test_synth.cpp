#include "cohere/error.hpp"
#include "cohere/synth.hpp"

#include "doctest.h"

#include <cmath>

using namespace cohere;

namespace {

SceneSpec static_box_spec() {
  SceneSpec spec;
  spec.frames = 3;
  spec.sweeps_per_frame = 2;
  spec.objects = {BoxObject{}};
  spec.objects[0].position = {6.0, -3.0};
  spec.objects[0].yaw = 0.4;
  return spec;
}

// Distance from a local point to the box surface (outside or inside).
double surface_distance(const BoxObject& box, const Vec3& local) {
  const Vec3 half(box.size.x() / 2, box.size.y() / 2, box.size.z() / 2);
  const Vec3 q = local - Vec3(0, 0, box.elevation + half.z());
  const Vec3 d = q.cwiseAbs() - half;
  const double outside = d.cwiseMax(0.0).norm();
  const double inside = std::min(d.maxCoeff(), 0.0);
  return outside + std::abs(inside);
}

}  // namespace

TEST_CASE("static box points lie on its surface") {
  const SceneSpec spec = static_box_spec();
  const Scene scene = generate(spec);
  REQUIRE(scene.frames.size() == 3);
  const BoxObject& box = spec.objects[0];
  std::size_t box_points = 0;
  for (std::size_t f = 0; f < 3; ++f) {
    const Frame& frame = scene.frames[f];
    for (std::size_t i = 0; i < frame.merged_points.size(); ++i) {
      if (scene.truth.frames[f].point_labels[i] != 0) continue;
      const Vec3 world = frame.frame_pose.apply(frame.merged_points[i].point.vec());
      const Vec3 local = object_pose(box, 0.0).inverse().apply(world);
      CHECK(surface_distance(box, local) <= 3 * std::sqrt(3.0) * spec.noise_sigma);
      ++box_points;
    }
  }
  CHECK(box_points == 3u * 2u * static_cast<std::size_t>(spec.points_per_object));
  REQUIRE(scene.truth.trajectories.size() == 1);
  CHECK(scene.truth.trajectories.at(0).size() == 3);
}

TEST_CASE("labels align with merged points") {
  const Scene scene = generate(default_scene());
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    CHECK(scene.truth.frames[f].point_labels.size() == scene.frames[f].merged_points.size());
    CHECK(scene.frames[f].index == static_cast<int>(f));
    CHECK(scene.frames[f].sweeps.size() == 10);
  }
  CHECK(scene.truth.trajectories.size() == 8);
}

TEST_CASE("constant velocity object advances 0.5 m per frame") {
  SceneSpec spec;
  spec.frames = 5;
  spec.surface_drift = 0.0;
  spec.objects = {BoxObject{}};
  spec.objects[0].position = {5.0, 5.0};
  spec.objects[0].velocity = {1.0, 0.0};
  const Scene scene = generate(spec);
  for (std::size_t f = 1; f < 5; ++f) {
    const Vec3 step = scene.truth.frames[f].instances[0].start_world - scene.truth.frames[f - 1].instances[0].start_world;
    CHECK(std::abs(step.x() - 0.5) < 1e-12);
    CHECK(std::abs(step.y()) < 1e-12);
    CHECK(std::abs(step.z()) < 1e-12);
  }
}

TEST_CASE("truth trajectories are linear for constant velocity without drift") {
  SceneSpec spec = default_scene();
  spec.surface_drift = 0.0;
  const Scene scene = generate(spec);
  for (const auto& [object, frames] : scene.truth.trajectories) {
    const Eigen::Vector2d v = spec.objects[static_cast<std::size_t>(object)].velocity;
    const InstanceTruth* first = nullptr;
    for (const InstanceTruth& inst : scene.truth.frames[static_cast<std::size_t>(frames.front())].instances) {
      if (inst.object == object) first = &inst;
    }
    const int f0 = frames.front();
    for (const FrameTruth& ft : scene.truth.frames) {
      for (const InstanceTruth& inst : ft.instances) {
        if (inst.object != object) continue;
        const double dt = (ft.frame - f0) * spec.frame_interval;
        const Vec3 expected = first->start_world + Vec3(v.x() * dt, v.y() * dt, 0.0);
        CHECK((inst.start_world - expected).norm() < 1e-12);
        const Vec3 gap = inst.end_world - inst.start_world;
        const double span = (spec.sweeps_per_frame - 1) * spec.sweep_interval;
        CHECK((gap - Vec3(v.x() * span, v.y() * span, 0.0)).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("generation is deterministic per seed and independent of threads") {
  SceneSpec spec = default_scene();
  spec.frames = 4;
  const Scene a = generate(spec, 1);
  const Scene b = generate(spec, 4);
  spec.seed = 43;
  const Scene c = generate(spec, 1);
  bool differs = false;
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    REQUIRE(a.frames[f].merged_points.size() == b.frames[f].merged_points.size());
    for (std::size_t i = 0; i < a.frames[f].merged_points.size(); ++i) {
      const Point3& p = a.frames[f].merged_points[i].point;
      const Point3& q = b.frames[f].merged_points[i].point;
      CHECK((p.x == q.x && p.y == q.y && p.z == q.z && p.intensity == q.intensity));
      const Point3& r = c.frames[f].merged_points[i].point;
      differs = differs || p.x != r.x;
    }
  }
  CHECK(differs);
}

TEST_CASE("surface samples wander smoothly") {
  const SceneSpec spec = default_scene();
  const auto a = surface_points(spec, 0, 30), b = surface_points(spec, 0, 31);
  REQUIRE(a.size() == b.size());
  double max_step = 0;
  for (std::size_t i = 0; i < a.size(); ++i) max_step = std::max(max_step, (a[i] - b[i]).norm());
  CHECK(max_step <= 2 * 0.6 * spec.surface_drift + 1e-12);
  SceneSpec fixed = spec;
  fixed.surface_drift = 0.0;
  CHECK(surface_points(fixed, 0, 3) == surface_points(fixed, 0, 99));
}

TEST_CASE("scene validation") {
  SceneSpec spec = default_scene();
  spec.objects.push_back(spec.objects[0]);
  try {
    generate(spec);
    FAIL("overlap accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidScene);
  }
  SceneSpec one = static_box_spec();
  one.sweeps_per_frame = 1;
  CHECK_THROWS_AS(validate_scene(one), Error);
  SceneSpec crowded = static_box_spec();
  crowded.sweeps_per_frame = 11;  // 0.5 s of sweeps in a 0.5 s frame
  CHECK_THROWS_AS(validate_scene(crowded), Error);
  SceneSpec fast = static_box_spec();
  fast.objects[0].velocity = {20.0, 0.0};
  CHECK(validate_scene(fast).size() == 1);
  CHECK(validate_scene(default_scene()).empty());
}

TEST_CASE("objects out of range emit nothing") {
  SceneSpec spec = static_box_spec();
  spec.objects[0].position = {80.0, 0.0};
  const Scene scene = generate(spec);
  for (const FrameTruth& ft : scene.truth.frames) {
    CHECK(ft.instances.empty());
    for (int l : ft.point_labels) CHECK(l == -1);
  }
}

TEST_CASE("camera views") {
  const Scene scene = generate(static_box_spec());
  const CameraRigSpec rig;
  const DepthBins bins;
  const auto views = render_views(scene.frames[0], rig, bins, 1);
  REQUIRE(views.size() == 4);
  std::size_t hits = 0;
  for (const CameraView& v : views) {
    CHECK(v.image.height == rig.height);
    CHECK(v.image.width == rig.width);
    REQUIRE(v.estimated.size() == static_cast<std::size_t>(rig.height * rig.width));
    for (const DepthDistribution& d : v.estimated) {
      CHECK(std::abs(d.sum() - 1.0) < 1e-9);
      if (d.k_gt) ++hits;
    }
  }
  CHECK(hits > 0);
  const auto again = render_views(scene.frames[0], rig, bins, 1);
  CHECK(again[2].image.data == views[2].image.data);
}
