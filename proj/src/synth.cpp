#include "cohere/synth.hpp"

#include "cohere/error.hpp"
#include "cohere/parallel.hpp"
#include "cohere/rng.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace cohere {

namespace {

using Corners = std::array<Eigen::Vector2d, 4>;

Corners footprint(const BoxObject& box) {
  const Eigen::Rotation2Dd rot(box.yaw);
  const double hl = box.size.x() / 2.0, hw = box.size.y() / 2.0;
  return {box.position + rot * Eigen::Vector2d(hl, hw), box.position + rot * Eigen::Vector2d(-hl, hw),
          box.position + rot * Eigen::Vector2d(-hl, -hw), box.position + rot * Eigen::Vector2d(hl, -hw)};
}

// Separating-axis test on two convex quads; touching does not count.
bool overlaps(const Corners& a, const Corners& b) {
  for (const Corners* poly : {&a, &b}) {
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d edge = (*poly)[(i + 1) % 4] - (*poly)[i];
      const Eigen::Vector2d axis(-edge.y(), edge.x());
      double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo, b_lo = a_lo, b_hi = -a_lo;
      for (const auto& c : a) {
        a_lo = std::min(a_lo, axis.dot(c));
        a_hi = std::max(a_hi, axis.dot(c));
      }
      for (const auto& c : b) {
        b_lo = std::min(b_lo, axis.dot(c));
        b_hi = std::max(b_hi, axis.dot(c));
      }
      if (a_hi <= b_lo || b_hi <= a_lo) return false;
    }
  }
  return true;
}

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : pts) sum += p;
  return pts.empty() ? sum : Vec3(sum / static_cast<double>(pts.size()));
}

bool in_range(const Pose& object, const Pose& ego, double range) {
  return (object.translation() - ego.translation()).head<2>().norm() <= range;
}

}  // namespace

SceneSpec default_scene() {
  SceneSpec spec;
  spec.ego.velocity = {2.0, 0.0};
  const Vec3 car{4.0, 1.8, 1.5};
  const Vec3 pedestrian{0.6, 0.6, 1.7};
  const Vec3 cyclist{1.8, 0.6, 1.6};
  spec.objects = {
      {car, {10.0, 4.0}, 0.0, 0.0, {2.0, 0.0}},
      {car, {-6.0, -4.0}, 0.0, 0.0, {1.5, 0.0}},
      {car, {20.0, -8.0}, 0.3, 0.0, {0.0, 0.0}},
      {pedestrian, {5.0, 10.0}, 0.0, 0.0, {0.0, -0.5}},
      {pedestrian, {15.0, 12.0}, 0.0, 0.0, {0.8, 0.0}},
      {cyclist, {-10.0, 14.0}, 0.0, 0.0, {1.8, 0.0}},
      {car, {0.0, -12.0}, std::numbers::pi / 2.0, 0.0, {0.0, 0.0}},
      {car, {30.0, -16.0}, std::numbers::pi, 0.0, {-1.0, 0.0}},
  };
  return spec;
}

std::vector<std::string> validate_scene(const SceneSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidScene, msg); };
  if (spec.frames < 1) fail("frames must be >= 1");
  if (spec.sweeps_per_frame < 2) fail("sweeps_per_frame must be >= 2");
  if (!(spec.sweep_interval > 0.0)) fail("sweep_interval must be positive");
  if (!(spec.end_scan_gap() > 0.0)) fail("sweeps of one frame must fit inside the frame interval");
  if (!(spec.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(spec.surface_drift >= 0.0)) fail("surface_drift must be >= 0");
  if (spec.points_per_object < 0 || spec.ground_points < 0) fail("point counts must be >= 0");
  if (spec.ground_points == 0 && spec.points_per_object == 0) fail("scene emits no points");
  if (!(spec.ground_radius > 0.0) || !(spec.sensor_range > 0.0)) fail("radii must be positive");
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const Vec3& s = spec.objects[i].size;
    if (!(s.minCoeff() > 0.0)) fail("object " + std::to_string(i) + " has a non-positive size");
    for (std::size_t j = 0; j < i; ++j) {
      if (overlaps(footprint(spec.objects[i]), footprint(spec.objects[j]))) {
        fail("objects " + std::to_string(j) + " and " + std::to_string(i) + " overlap at t = 0");
      }
    }
  }
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const double travel = spec.objects[i].velocity.norm() * spec.end_scan_gap();
    if (travel > spec.speed_bound) {
      std::ostringstream os;
      os << "object " << i << " moves " << travel << " m between end scans (bound " << spec.speed_bound << " m)";
      warnings.push_back(os.str());
    }
  }
  return warnings;
}

namespace {

// A surface sample: a face, its rest position in face coordinates and the
// phase and rate of its wander. Faces: 0 = +x, 1 = -x, 2 = +y, 3 = -y, 4 = top.
struct SurfaceSample {
  int face = 0;
  double u = 0.0, v = 0.0;
  double rate_u = 0.0, rate_v = 0.0;
  double phase_u = 0.0, phase_v = 0.0;
};

// Folds x back into [lo, hi] as if reflected at both ends.
double reflect(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double t = std::fmod(x - lo, 2.0 * span);
  if (t < 0.0) t += 2.0 * span;
  return lo + (t <= span ? t : 2.0 * span - t);
}

std::vector<SurfaceSample> draw_samples(const BoxObject& box, int count, std::mt19937_64& rng) {
  const double l = box.size.x(), w = box.size.y(), h = box.size.z();
  const std::array<double, 5> areas{w * h, w * h, l * h, l * h, l * w};
  const double total = areas[0] + areas[1] + areas[2] + areas[3] + areas[4];
  std::vector<SurfaceSample> out(static_cast<std::size_t>(count));
  for (SurfaceSample& smp : out) {
    double pick = uniform01(rng) * total;
    while (smp.face < 4 && pick >= areas[smp.face]) pick -= areas[smp.face++];
    smp.u = uniform01(rng);
    smp.v = uniform01(rng);
    smp.rate_u = 0.2 + 0.4 * uniform01(rng);
    smp.rate_v = 0.2 + 0.4 * uniform01(rng);
    smp.phase_u = 2.0 * std::numbers::pi * uniform01(rng);
    smp.phase_v = 2.0 * std::numbers::pi * uniform01(rng);
  }
  return out;
}

Vec3 place(const BoxObject& box, const SurfaceSample& smp, double drift, long sweep) {
  const double l = box.size.x(), w = box.size.y(), h = box.size.z();
  const auto g = static_cast<double>(sweep);
  const double du = drift * std::sin(smp.rate_u * g + smp.phase_u);
  const double dv = drift * std::sin(smp.rate_v * g + smp.phase_v);
  // Extent of the face along its two in-plane axes.
  const double eu = smp.face < 2 ? w : l;
  const double ev = smp.face < 4 ? h : w;
  const double u = reflect(smp.u * eu + du, 0.0, eu) - eu / 2.0;
  const double v = reflect(smp.v * ev + dv, 0.0, ev);
  switch (smp.face) {
    case 0: return {l / 2, u, box.elevation + v};
    case 1: return {-l / 2, u, box.elevation + v};
    case 2: return {u, w / 2, box.elevation + v};
    case 3: return {u, -w / 2, box.elevation + v};
    default: return {u, v - w / 2, box.elevation + h};
  }
}

std::vector<SurfaceSample> object_samples(const SceneSpec& spec, int object) {
  std::mt19937_64 rng = make_stream(spec.seed, {id(Stream::SceneSweep), 0xFFFF'FFFFull, static_cast<std::uint64_t>(object)});
  return draw_samples(spec.objects.at(static_cast<std::size_t>(object)), spec.points_per_object, rng);
}

std::vector<Vec3> place_all(const SceneSpec& spec, int object, const std::vector<SurfaceSample>& samples, long sweep) {
  const BoxObject& box = spec.objects.at(static_cast<std::size_t>(object));
  std::vector<Vec3> pts;
  pts.reserve(samples.size());
  for (const SurfaceSample& smp : samples) pts.push_back(place(box, smp, spec.surface_drift, sweep));
  return pts;
}

}  // namespace

std::vector<Vec3> surface_points(const SceneSpec& spec, int object, long sweep) {
  return place_all(spec, object, object_samples(spec, object), sweep);
}

Pose object_pose(const BoxObject& object, double t) {
  const Eigen::Vector2d xy = object.position + object.velocity * t;
  return Pose::from_yaw(object.yaw, Vec3(xy.x(), xy.y(), 0.0));
}

Pose ego_pose(const EgoMotion& ego, double t) {
  const Eigen::Vector2d xy = ego.position + ego.velocity * t;
  return Pose::from_yaw(ego.yaw + ego.yaw_rate * t, Vec3(xy.x(), xy.y(), 0.0));
}

Scene generate(const SceneSpec& spec, int threads) {
  Scene scene;
  scene.warnings = validate_scene(spec);

  const std::size_t n_objects = spec.objects.size();
  std::vector<std::vector<SurfaceSample>> samples(n_objects);
  for (std::size_t o = 0; o < n_objects; ++o) samples[o] = object_samples(spec, static_cast<int>(o));
  auto global_sweep = [&](int f, int s) { return static_cast<long>(f) * spec.sweeps_per_frame + s; };

  scene.frames.resize(static_cast<std::size_t>(spec.frames));
  scene.truth.frames.resize(static_cast<std::size_t>(spec.frames));
  parallel_for(static_cast<std::size_t>(spec.frames), threads, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    std::vector<Sweep> sweeps(static_cast<std::size_t>(spec.sweeps_per_frame));
    std::vector<int> labels;
    std::vector<std::vector<char>> visible(n_objects, std::vector<char>(sweeps.size(), 0));
    for (int s = 0; s < spec.sweeps_per_frame; ++s) {
      const double t = spec.sweep_time(f, s);
      Sweep& sweep = sweeps[static_cast<std::size_t>(s)];
      sweep.timestamp = t;
      sweep.pose = ego_pose(spec.ego, t);
      const Pose world_to_ego = sweep.pose.inverse();
      std::mt19937_64 rng = make_stream(spec.seed, {id(Stream::SceneSweep), fi, static_cast<std::uint64_t>(s)});
      std::normal_distribution<double> normal(0.0, 1.0);
      auto noise = [&] { return spec.noise_sigma * normal(rng); };

      for (std::size_t o = 0; o < n_objects; ++o) {
        const Pose pose = object_pose(spec.objects[o], t);
        if (spec.points_per_object == 0 || !in_range(pose, sweep.pose, spec.sensor_range)) continue;
        visible[o][static_cast<std::size_t>(s)] = 1;
        for (const Vec3& local : place_all(spec, static_cast<int>(o), samples[o], global_sweep(f, s))) {
          Vec3 world = pose.apply(local);
          for (int axis = 0; axis < 3; ++axis) world[axis] += noise();
          sweep.points.push_back(Point3::from(world_to_ego.apply(world), 0.4 + 0.6 * uniform01(rng)));
          labels.push_back(static_cast<int>(o));
        }
      }
      for (int g = 0; g < spec.ground_points; ++g) {
        const double r = spec.ground_radius * std::sqrt(uniform01(rng));
        const double theta = 2.0 * std::numbers::pi * uniform01(rng);
        const double z = noise();
        sweep.points.push_back({r * std::cos(theta), r * std::sin(theta), z, 0.3 * uniform01(rng)});
        labels.push_back(-1);
      }
    }

    Frame frame = compose_frame(std::move(sweeps), f);
    FrameTruth truth;
    truth.frame = f;
    truth.point_labels = std::move(labels);
    const Pose world_to_ref = frame.frame_pose.inverse();
    const double t_first = frame.sweeps.front().timestamp;
    const double t_last = frame.sweeps.back().timestamp;
    for (std::size_t o = 0; o < n_objects; ++o) {
      if (!visible[o].front() || !visible[o].back()) continue;
      InstanceTruth inst;
      inst.object = static_cast<int>(o);
      const int last = spec.sweeps_per_frame - 1;
      inst.start_world = object_pose(spec.objects[o], t_first)
                             .apply(centroid(place_all(spec, static_cast<int>(o), samples[o], global_sweep(f, 0))));
      inst.end_world = object_pose(spec.objects[o], t_last)
                           .apply(centroid(place_all(spec, static_cast<int>(o), samples[o], global_sweep(f, last))));
      inst.start_ego = world_to_ref.apply(inst.start_world);
      inst.end_ego = world_to_ref.apply(inst.end_world);
      truth.instances.push_back(inst);
    }
    scene.frames[fi] = std::move(frame);
    scene.truth.frames[fi] = std::move(truth);
  });

  for (const FrameTruth& ft : scene.truth.frames) {
    for (const InstanceTruth& inst : ft.instances) scene.truth.trajectories[inst.object].push_back(ft.frame);
  }
  return scene;
}

std::vector<CameraView> render_views(const Frame& frame, const CameraRigSpec& rig, const DepthBins& bins,
                                     std::uint64_t seed) {
  if (rig.cameras < 1 || rig.height < 1 || rig.width < 1 || !(rig.focal > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "camera rig needs positive camera count, image size and focal length");
  }
  std::vector<CameraView> views;
  for (int cam = 0; cam < rig.cameras; ++cam) {
    const double yaw = 2.0 * std::numbers::pi * cam / rig.cameras;
    const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    Mat3 rot;
    rot.col(0) = right;
    rot.col(1) = down;
    rot.col(2) = forward;

    CameraView view;
    view.camera.fx = view.camera.fy = rig.focal;
    view.camera.cx = rig.width / 2.0;
    view.camera.cy = rig.height / 2.0;
    view.camera.extrinsic = Pose(rot, Vec3(0.0, 0.0, rig.mount_height));
    view.image = ImageFeatures(rig.height, rig.width, 3);

    const Pose ego_to_cam = view.camera.extrinsic.inverse();
    const std::size_t n_pixels = static_cast<std::size_t>(rig.height) * rig.width;
    std::vector<double> zbuf(n_pixels, std::numeric_limits<double>::infinity());
    std::vector<const Point3*> hit(n_pixels, nullptr);
    for (const TaggedPoint& tp : frame.merged_points) {
      const Vec3 pc = ego_to_cam.apply(tp.point.vec());
      if (pc.z() < 0.5) continue;
      const long w = std::lround(view.camera.fx * pc.x() / pc.z() + view.camera.cx);
      const long h = std::lround(view.camera.fy * pc.y() / pc.z() + view.camera.cy);
      if (w < 0 || w >= rig.width || h < 0 || h >= rig.height) continue;
      const std::size_t idx = static_cast<std::size_t>(h) * rig.width + static_cast<std::size_t>(w);
      if (pc.z() < zbuf[idx]) {
        zbuf[idx] = pc.z();
        hit[idx] = &tp.point;
      }
    }

    std::mt19937_64 rng = make_stream(seed, {id(Stream::CameraDepth), static_cast<std::uint64_t>(frame.index),
                                             static_cast<std::uint64_t>(cam)});
    std::normal_distribution<double> bias(0.0, rig.depth_bias);
    view.estimated.resize(n_pixels);
    for (std::size_t idx = 0; idx < n_pixels; ++idx) {
      DepthDistribution& dist = view.estimated[idx];
      dist.p.assign(static_cast<std::size_t>(bins.count), 1.0 / bins.count);
      const auto k_gt = hit[idx] ? bins.index_of(zbuf[idx]) : std::nullopt;
      if (!k_gt) continue;
      dist.k_gt = k_gt;
      const double mu = static_cast<double>(*k_gt) + bias(rng);
      double total = 0.0;
      for (std::size_t k = 1; k <= dist.p.size(); ++k) {
        const double d = (static_cast<double>(k) - mu) / rig.depth_sigma;
        dist.p[k - 1] = std::exp(-0.5 * d * d);
        total += dist.p[k - 1];
      }
      if (total > 0.0) {
        for (double& v : dist.p) v /= total;
      } else {
        std::fill(dist.p.begin(), dist.p.end(), 1.0 / bins.count);
      }
      const auto px = view.image.pixel(static_cast<int>(idx / rig.width), static_cast<int>(idx % rig.width));
      px[0] = 1.0;
      px[1] = hit[idx]->z / 2.0;
      px[2] = hit[idx]->intensity;
    }
    views.push_back(std::move(view));
  }
  return views;
}

}  // namespace cohere
