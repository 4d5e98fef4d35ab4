#include "cohere/error.hpp"
#include "cohere/ground.hpp"
#include "cohere/learn.hpp"
#include "cohere/pipeline.hpp"
#include "cohere/synth.hpp"

#include "../helpers.hpp"
#include "../oracles.hpp"
#include "doctest.h"

#include <Eigen/QR>

#include <cmath>
#include <numeric>
#include <random>

using namespace cohere;

namespace {

Eigen::MatrixXd unit_rows(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
    m.row(r).normalize();
  }
  return m;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

double loss_of(const Eigen::MatrixXd& online, const std::vector<int>& inst, const Eigen::MatrixXd& targets,
               const Eigen::MatrixXd& background, double tau) {
  return contrastive_loss(online, inst, targets, background, tau).loss;
}

}  // namespace

TEST_CASE("instance feature examples") {
  const BevGeometry g{-2, 2, -2, 2, 1.0};
  FeatureMap constant(g, 3);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) constant.vec(r, c) = Eigen::Vector3d(1, -2, 0.5);
  }
  SamplePlan plan;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 30; ++i) plan.foreground.push_back({{u(rng), u(rng)}, 0});
  CHECK((instance_feature(constant, plan, 0).raw - Eigen::Vector3d(1, -2, 0.5)).norm() < 1e-12);

  FeatureMap two(g, 2);
  two.vec(0, 0) = Eigen::Vector2d(1, 0);
  two.vec(3, 3) = Eigen::Vector2d(0, 1);
  SamplePlan pair;
  pair.foreground = {{g.cell_center(0, 0), 4}, {g.cell_center(3, 3), 4}, {g.cell_center(1, 1), 5}};
  const InstanceFeature f = instance_feature(two, pair, 4);
  CHECK(f.raw == Eigen::Vector2d(0.5, 0.5));
  CHECK(std::abs(f.unit.norm() - 1.0) < 1e-9);
  try {
    instance_feature(two, pair, 9);
    FAIL("missing instance accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoSamples);
  }
}

TEST_CASE("instance feature equals the summation oracle") {
  std::mt19937_64 rng(2);
  const BevGeometry g{-10, 10, -10, 10, 0.5};
  FeatureMap map(g, 8);
  std::uniform_real_distribution<double> u(-1, 1), pos(-9.7, 9.7);
  for (double& v : map.data()) v = u(rng);
  SamplePlan plan;
  for (int i = 0; i < 1000; ++i) plan.foreground.push_back({{pos(rng), pos(rng)}, 0});
  std::vector<Eigen::VectorXd> rows;
  for (const auto& s : plan.foreground) rows.push_back(oracle::bilinear(map, s.position.x(), s.position.y()));
  CHECK((instance_feature(map, plan, 0).raw - oracle::mean(rows)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("normalization") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd v = random_vector(rng, 16);
    const Eigen::VectorXd n = normalized(v);
    CHECK(std::abs(n.norm() - 1.0) < 1e-9);
    CHECK((normalized(n) - n).norm() < 1e-15);
  }
  CHECK_THROWS_AS(normalized(Eigen::VectorXd::Zero(4)), Error);
}

TEST_CASE("memory bank") {
  MemoryBank bank(2);
  const Eigen::VectorXd v = Eigen::Vector2d(1, 2), w = Eigen::Vector2d(3, 4);
  bank.update(7, 10, v);
  CHECK(temporal_average(bank, 7) == v);
  bank.update(7, 11, w);
  bank.update(7, 12, w);
  bank.update(7, 13, w);
  CHECK(bank.slot(7).entries.size() == 3);
  CHECK(bank.slot(7).entries.front().first == 11);
  CHECK(bank.slot(7).created == 10);
  CHECK_THROWS_AS(bank.update(7, 13, v), Error);

  // Track 8 is unmatched at frame 14: its bank stays as it was.
  bank.update(8, 12, v);
  const auto before = bank.slot(8).entries;
  bank.update(7, 14, v);
  bank.prune(14);
  REQUIRE(bank.contains(8));
  CHECK(bank.slot(8).entries == before);
  bank.prune(15);
  CHECK_FALSE(bank.contains(8));
  CHECK(bank.contains(7));

  try {
    temporal_average(bank, 99);
    FAIL("missing bank accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoHistory);
  }
}

TEST_CASE("temporal average degenerate and oracle cases") {
  MemoryBank bank(16);
  bank.update(1, 0, Eigen::Vector3d(1, 2, 3));
  bank.update(1, 1, Eigen::Vector3d(-1, -2, -3));
  CHECK_THROWS_AS(normalized(temporal_average(bank, 1)), Error);

  std::mt19937_64 rng(4);
  MemoryBank full(16);
  std::vector<Eigen::VectorXd> stored;
  for (int f = 0; f < 17; ++f) {
    stored.push_back(random_vector(rng, 16));
    full.update(3, f, stored.back());
  }
  CHECK((temporal_average(full, 3) - oracle::mean(stored)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("temporal average commutes with rotations") {
  std::mt19937_64 rng(5);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Random(8, 8));
  const Eigen::MatrixXd rot = qr.householderQ();
  MemoryBank plain(16), rotated(16);
  for (int f = 0; f < 10; ++f) {
    const Eigen::VectorXd v = random_vector(rng, 8);
    plain.update(0, f, v);
    rotated.update(0, f, rot * v);
  }
  CHECK((temporal_average(rotated, 0) - rot * temporal_average(plain, 0)).norm() < 1e-9);
}

TEST_CASE("ema update") {
  std::mt19937_64 rng(6);
  const EncoderParams online = EncoderParams::random(4, 3, rng);
  const EncoderParams target = EncoderParams::random(4, 3, rng);
  CHECK(ema_update(target, online, 1.0) == target);
  CHECK(ema_update(target, online, 0.0) == online);
  CHECK_THROWS_AS(ema_update(target, EncoderParams::zeros(3, 3), 0.5), Error);
  CHECK_THROWS_AS(ema_update(target, online, 1.5), Error);

  auto distance = [](const EncoderParams& a, const EncoderParams& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    return std::sqrt(s);
  };
  for (double m : {0.0, 0.3, 0.9, 0.99}) {
    const EncoderParams next = ema_update(target, online, m);
    CHECK(distance(next, online) == doctest::Approx(m * distance(target, online)).epsilon(1e-12));
  }

  EncoderParams ones = EncoderParams::zeros(2, 2);
  std::fill(ones.values.begin(), ones.values.end(), 1.0);
  const EncoderParams zeros = EncoderParams::zeros(2, 2);
  for (int n = 1; n <= 50; ++n) {
    ones = ema_update(ones, zeros, 0.99);
    CHECK(std::abs(ones.values[0] - std::pow(0.99, n)) < 1e-13);
  }
}

TEST_CASE("contrastive loss examples") {
  Eigen::MatrixXd target(1, 3);
  target << 0, 1, 0;
  const Eigen::MatrixXd none(0, 3);
  const ContrastiveResult lone = contrastive_loss(target, std::vector{0}, target, none, 0.1);
  CHECK(lone.loss == 0.0);
  CHECK(lone.positive_prob[0] == 1.0);

  Eigen::MatrixXd two(2, 2);
  two << 1, 0, 0, 1;
  Eigen::MatrixXd f(1, 2);
  f << 1, 1;
  const ContrastiveResult sym = contrastive_loss(f, std::vector{0}, two, Eigen::MatrixXd(0, 2), 0.1);
  CHECK(sym.positive_prob[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sym.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("contrastive loss input validation") {
  Eigen::MatrixXd t(1, 2);
  t << 1, 0;
  Eigen::MatrixXd f(1, 2);
  f << 1, 1;
  try {
    contrastive_loss(f, std::vector{0}, t * 2, Eigen::MatrixXd(0, 2), 0.1);
    FAIL("unnormalized targets accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotNormalized);
  }
  try {
    contrastive_loss(f, std::vector{0}, t, Eigen::MatrixXd(0, 2), 0.0);
    FAIL("zero temperature accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadTemperature);
  }
  Eigen::MatrixXd bg(1, 2);
  bg << 0, 3;
  CHECK_THROWS_AS(contrastive_loss(f, std::vector{0}, t, bg, 0.1), Error);
  CHECK_THROWS_AS(contrastive_loss(f, std::vector{1}, t, Eigen::MatrixXd(0, 2), 0.1), Error);
}

TEST_CASE("contrastive gradient matches finite differences") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd targets = unit_rows(rng, 5, 16);
  const Eigen::MatrixXd background = unit_rows(rng, 8, 16);
  Eigen::MatrixXd online(20, 16);
  for (Eigen::Index r = 0; r < 20; ++r) online.row(r) = random_vector(rng, 16).transpose();
  std::vector<int> inst(20);
  for (int& i : inst) i = static_cast<int>(rng() % 5);
  const ContrastiveResult res = contrastive_loss(online, inst, targets, background, 0.1);
  const Eigen::VectorXd numeric = oracle::numeric_gradient(
      [&](const Eigen::VectorXd& x) {
        const Eigen::MatrixXd m = x.reshaped(20, 16);
        return loss_of(m, inst, targets, background, 0.1);
      },
      online.reshaped());
  CHECK(gradient_rel_error(res.grad.reshaped(), numeric) <= 1e-5);

  const GradCheckReport report = check_contrastive_gradients(11, 50);
  CHECK(report.checks == 50);
  CHECK(report.passed);
  CHECK(report.max_rel_error <= 1e-5);
}

TEST_CASE("contrastive loss invariances") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd targets = unit_rows(rng, 4, 6);
  const Eigen::MatrixXd background = unit_rows(rng, 7, 6);
  Eigen::MatrixXd online(12, 6);
  for (Eigen::Index r = 0; r < 12; ++r) online.row(r) = random_vector(rng, 6).transpose();
  std::vector<int> inst(12);
  for (int& i : inst) i = static_cast<int>(rng() % 4);
  const double base = loss_of(online, inst, targets, background, 0.2);

  // Relabel instances.
  std::vector<int> perm{2, 0, 3, 1};
  Eigen::MatrixXd t2(4, 6);
  for (int m = 0; m < 4; ++m) t2.row(perm[m]) = targets.row(m);
  std::vector<int> inst2;
  for (int i : inst) inst2.push_back(perm[i]);
  CHECK(loss_of(online, inst2, t2, background, 0.2) == doctest::Approx(base).epsilon(1e-13));

  // Reverse background order.
  const Eigen::MatrixXd bg2 = background.colwise().reverse();
  CHECK(loss_of(online, inst, targets, bg2, 0.2) == doctest::Approx(base).epsilon(1e-13));

  // Online rows are normalized internally: rescaling or pre-normalizing changes nothing.
  Eigen::MatrixXd unit = online;
  for (Eigen::Index r = 0; r < unit.rows(); ++r) unit.row(r).normalize();
  CHECK(loss_of(unit, inst, targets, background, 0.2) == doctest::Approx(base).epsilon(1e-13));
  CHECK(loss_of(online * 3.7, inst, targets, background, 0.2) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("loss decreases as the positive similarity grows") {
  // Orthonormal basis: e0 is the positive, e1 and e2 negatives. The sample
  // keeps fixed dot products with the negatives while its positive dot
  // product sweeps upward.
  Eigen::MatrixXd targets(2, 4);
  targets << 1, 0, 0, 0, 0, 1, 0, 0;
  Eigen::MatrixXd background(1, 4);
  background << 0, 0, 1, 0;
  double previous = std::numeric_limits<double>::infinity();
  for (double a = -0.8; a <= 0.8; a += 0.05) {
    Eigen::MatrixXd f(1, 4);
    f << a, 0.2, -0.1, 0.0;
    f(0, 3) = std::sqrt(1.0 - a * a - 0.05);
    const double l = loss_of(f, {0}, targets, background, 0.1);
    CHECK(l < previous);
    previous = l;
  }
}

TEST_CASE("encoder backward matches finite differences") {
  std::mt19937_64 rng(9);
  const BevGeometry g{-2, 2, -2, 2, 0.5};
  FeatureMap splat(g, 3);
  std::uniform_real_distribution<double> u(0, 2);
  for (double& v : splat.data()) v = u(rng);
  EncoderParams theta = EncoderParams::random(4, encoder_inputs(3), rng);
  FeatureMap weights(g, 4);
  for (double& v : weights.data()) v = u(rng) - 1;
  auto f = [&](const Eigen::VectorXd& x) {
    EncoderParams p = theta;
    for (Eigen::Index i = 0; i < x.size(); ++i) p.values[static_cast<std::size_t>(i)] = x[i];
    const FeatureMap out = encode(p, splat);
    double s = 0;
    for (std::size_t i = 0; i < out.data().size(); ++i) s += out.data()[i] * weights.data()[i];
    return s;
  };
  const FeatureMap out = encode(theta, splat);
  const EncoderParams grad = encode_backward(theta, splat, out, weights);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(theta.values.data(), static_cast<Eigen::Index>(theta.values.size()));
  const Eigen::VectorXd numeric = oracle::numeric_gradient(f, x);
  const Eigen::VectorXd analytic =
      Eigen::Map<const Eigen::VectorXd>(grad.values.data(), static_cast<Eigen::Index>(grad.values.size()));
  CHECK(gradient_rel_error(analytic, numeric) <= 1e-7);
  CHECK_THROWS_AS(encode(EncoderParams::zeros(4, 7), splat), Error);
}

namespace {

struct OneObject {
  Scene scene;
  PipelineConfig config;
  TrackingRun tracking;
  std::vector<std::vector<CameraView>> views;
};

OneObject one_object_scene() {
  OneObject o;
  SceneSpec spec;
  spec.frames = 3;
  spec.objects = {BoxObject{}};
  spec.objects[0].position = {9.0, 2.0};
  o.scene = generate(spec);
  o.config.learn.n_foreground = 64;
  o.config.learn.n_background = 64;
  o.tracking = run_tracking(o.scene.frames, o.config);
  for (const Frame& f : o.scene.frames) o.views.push_back(render_views(f, o.config.rig, o.config.learn.depth, 3));
  return o;
}

PretrainFrame input_of(const OneObject& o, std::size_t f) {
  PretrainFrame in;
  in.frame = &o.scene.frames[f];
  in.clusters = &o.tracking.frames[f].clusters;
  in.track_ids = o.tracking.tracks.assignments.at(o.scene.frames[f].index);
  in.views = o.views[f];
  return in;
}

}  // namespace

TEST_CASE("sample plan invariants") {
  const OneObject o = one_object_scene();
  const Frame& f = o.scene.frames[0];
  const ClusteringResult& c = o.tracking.frames[0].clusters;
  REQUIRE(c.clusters.size() == 1);
  const BevGeometry& g = o.config.learn.bev;
  const OccupancyGrid occ = occupancy_mask(g, f, c, 1);
  std::mt19937_64 rng(10);
  const SamplePlan plan = make_sample_plan(g, f, c, occ, 100, 50, rng);
  CHECK(plan.foreground.size() == 100);
  CHECK(plan.count_for(0) == 100);
  CHECK(plan.background.size() == 50);
  const auto footprints = cluster_footprints(g, f, c);
  for (const auto& s : plan.foreground) {
    const auto cell = g.cell_of(s.position.x(), s.position.y());
    REQUIRE(cell);
    CHECK(std::find(footprints[0].begin(), footprints[0].end(), *cell) != footprints[0].end());
  }
  for (const auto& p : plan.background) {
    const auto cell = g.cell_of(p.x(), p.y());
    REQUIRE(cell);
    CHECK_FALSE(occ.at(cell->first, cell->second));
  }
}

TEST_CASE("sample allocation across instances sums to N_F with one per instance") {
  const Scene scene = generate(default_scene());
  const PipelineConfig config;
  const TrackingRun run = run_tracking({scene.frames[0]}, config);
  const ClusteringResult& c = run.frames[0].clusters;
  REQUIRE(c.clusters.size() >= 2);
  const OccupancyGrid occ = occupancy_mask(config.learn.bev, scene.frames[0], c, 1);
  for (std::size_t nf : {std::size_t{3}, std::size_t{1000}}) {
    std::mt19937_64 rng(11);
    const SamplePlan plan = make_sample_plan(config.learn.bev, scene.frames[0], c, occ, nf, 10, rng);
    CHECK(plan.foreground.size() == std::max(nf, c.clusters.size()));
    for (std::size_t m = 0; m < c.clusters.size(); ++m) CHECK(plan.count_for(static_cast<int>(m)) >= 1);
  }
}

TEST_CASE("pretrainer objective reproduces the contrastive loss") {
  const OneObject o = one_object_scene();
  LearnParams params = o.config.learn;
  params.dropout = 0.0;
  std::mt19937_64 rng(12);
  const EncoderParams init = EncoderParams::random(params.channels, encoder_inputs(3), rng);
  Pretrainer trainer(params, 16, init, 5);
  CHECK(trainer.online() == trainer.target());
  const PretrainFrame in = input_of(o, 0);
  const StepContext ctx = trainer.prepare(in);
  REQUIRE(ctx.instance_targets.rows() == 1);

  const FeatureMap online_map = encode(init, ctx.online_splat);
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ctx.plan.foreground.size()), params.channels);
  for (std::size_t j = 0; j < ctx.plan.foreground.size(); ++j) {
    const auto& p = ctx.plan.foreground[j].position;
    rows.row(static_cast<Eigen::Index>(j)) = sample_bilinear(online_map, p.x(), p.y()).transpose();
  }
  const double expected = loss_of(rows, ctx.instance_of, ctx.instance_targets, ctx.background, params.temperature);
  const double got = trainer.objective(ctx, init, nullptr);
  CHECK(std::isfinite(got));
  CHECK(got == expected);

  // With a single history frame the target is the unit instance feature.
  REQUIRE(ctx.bank_updates.size() == 1);
  CHECK((ctx.instance_targets.row(0).transpose() - normalized(ctx.bank_updates[0].second)).norm() < 1e-12);

  const GradCheckReport check = check_objective_gradient(trainer, ctx);
  CHECK(check.passed);
}

TEST_CASE("pretrainer step updates state and skips empty frames") {
  const OneObject o = one_object_scene();
  std::mt19937_64 rng(13);
  const EncoderParams init = EncoderParams::random(o.config.learn.channels, encoder_inputs(3), rng);
  Pretrainer trainer(o.config.learn, 16, init, 5);
  const StepResult r = trainer.step(input_of(o, 0));
  CHECK_FALSE(r.skipped);
  CHECK(std::isfinite(r.loss));
  CHECK(r.grad_norm > 0);
  CHECK(trainer.steps_taken() == 1);
  CHECK(trainer.bank().slots().size() == 1);
  CHECK_FALSE(trainer.online() == init);
  CHECK_FALSE(trainer.target() == init);

  const ClusteringResult empty;
  PretrainFrame blank = input_of(o, 1);
  blank.clusters = &empty;
  blank.track_ids.clear();
  const EncoderParams before = trainer.online();
  const auto bank_before = trainer.bank().slots().begin()->second.entries;
  const StepResult s = trainer.step(blank);
  CHECK(s.skipped);
  CHECK(trainer.online() == before);
  CHECK(trainer.bank().slots().begin()->second.entries == bank_before);

  trainer.step(input_of(o, 2));
  CHECK(trainer.bank().slots().begin()->second.entries.size() == 2);
}
