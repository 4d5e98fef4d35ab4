#include "cohere/error.hpp"
#include "cohere/ground.hpp"
#include "cohere/synth.hpp"

#include "../helpers.hpp"
#include "doctest.h"

#include <random>

using namespace cohere;

namespace {

std::vector<TaggedPoint> tagged(const std::vector<Vec3>& pts) {
  std::vector<TaggedPoint> out;
  for (const Vec3& p : pts) out.push_back({Point3::from(p), 0});
  return out;
}

std::vector<Vec3> plane(std::mt19937_64& rng, int n, double radius, double sigma = 0.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Vec3> out;
  while (static_cast<int>(out.size()) < n) {
    const double x = u(rng), y = u(rng);
    if (std::hypot(x, y) > radius) continue;
    out.emplace_back(x, y, sigma * noise(rng));
  }
  return out;
}

}  // namespace

TEST_CASE("flat plane is all ground") {
  std::mt19937_64 rng(1);
  const auto pts = tagged(plane(rng, 3000, 40.0));
  const GroundLabeling g = segment_ground(pts);
  CHECK(g.ground_count() == pts.size());
}

TEST_CASE("box above a plane is non-ground") {
  std::mt19937_64 rng(2);
  std::vector<Vec3> pts = plane(rng, 4000, 30.0, 0.01);
  const std::size_t n_ground = pts.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) pts.emplace_back(10.0 + 2.0 * u(rng), 3.0 + 2.0 * u(rng), 0.5 + 1.5 * u(rng));
  const GroundLabeling g = segment_ground(tagged(pts));
  for (std::size_t i = n_ground; i < pts.size(); ++i) CHECK_FALSE(g.is_ground[i]);
  std::size_t ground_hits = 0;
  for (std::size_t i = 0; i < n_ground; ++i) ground_hits += g.is_ground[i];
  CHECK(ground_hits == n_ground);
}

TEST_CASE("sectors without points are simply absent") {
  // Everything in the +x half plane; the other half has no prototypes.
  std::mt19937_64 rng(3);
  std::vector<Vec3> pts;
  for (const Vec3& p : plane(rng, 2000, 20.0)) {
    if (p.x() > 0.5) pts.push_back(p);
  }
  const auto lines = fit_ground_lines(tagged(pts), GroundParams{});
  std::size_t empty = 0;
  for (const auto& seg : lines) empty += seg.empty();
  CHECK(empty >= 80);
  CHECK(segment_ground(tagged(pts)).ground_count() == pts.size());
}

TEST_CASE("sparse segments fall back to the global plane") {
  const auto pts = tagged({{5, 0, 0.1}, {5, 0.01, 0.5}});
  const GroundLabeling g = segment_ground(pts);
  CHECK(g.is_ground[0]);
  CHECK_FALSE(g.is_ground[1]);
}

TEST_CASE("points beyond max range are non-ground") {
  GroundParams p;
  p.max_range = 10.0;
  const auto pts = tagged({{3, 0, 0}, {12, 0, 0}});
  const GroundLabeling g = segment_ground(pts, p);
  CHECK(g.is_ground[0]);
  CHECK_FALSE(g.is_ground[1]);
}

TEST_CASE("empty frame is rejected") {
  CHECK_THROWS_AS(segment_ground(std::vector<TaggedPoint>{}), Error);
}

TEST_CASE("labeling is deterministic and monotone in d_ground") {
  std::mt19937_64 rng(4);
  std::vector<Vec3> pts = plane(rng, 3000, 30.0, 0.03);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 500; ++i) pts.emplace_back(u(rng) * 10 - 10, u(rng) * 10 - 10, u(rng));
  const auto tp = tagged(pts);
  const GroundLabeling a = segment_ground(tp);
  CHECK(segment_ground(tp).is_ground == a.is_ground);

  std::vector<bool> previous = a.is_ground;
  for (double d : {0.35, 0.5, 0.8, 1.2, 2.5}) {
    GroundParams p;
    p.d_ground = d;
    const GroundLabeling g = segment_ground(tp, p);
    for (std::size_t i = 0; i < tp.size(); ++i) {
      if (previous[i]) CHECK(g.is_ground[i]);
    }
    previous = g.is_ground;
  }
}

TEST_CASE("precision and recall on the synthetic scene with elevated boxes") {
  SceneSpec spec = default_scene();
  for (BoxObject& o : spec.objects) o.elevation = 0.4;
  const Scene scene = generate(spec);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const GroundLabeling g = segment_ground(scene.frames[f]);
    const auto& labels = scene.truth.frames[f].point_labels;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool truth = labels[i] < 0;
      if (g.is_ground[i] && truth) ++tp;
      if (g.is_ground[i] && !truth) ++fp;
      if (!g.is_ground[i] && truth) ++fn;
    }
  }
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  CHECK(precision >= 0.98);
  CHECK(recall >= 0.98);
}
