#include "cohere/error.hpp"
#include "cohere/geom.hpp"
#include "cohere/hdbscan.hpp"
#include "cohere/hungarian.hpp"
#include "cohere/io.hpp"
#include "cohere/learn.hpp"
#include "cohere/pipeline.hpp"
#include "cohere/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cohere;

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Pose pose_from_matrix(const Eigen::Matrix4d& m) {
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-12) {
    throw Error(ErrorKind::BadPose, "last row of a pose matrix must be [0, 0, 0, 1]");
  }
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

std::vector<Vec3> to_points(const RowPoints& pts) {
  std::vector<Vec3> out(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out[static_cast<std::size_t>(i)] = pts.row(i).transpose();
  return out;
}

py::dict metrics_dict(const TrackMetrics& m) {
  py::dict d;
  d["purity"] = m.purity;
  d["recall"] = m.recall;
  d["id_switches"] = m.id_switches;
  d["center_rmse"] = m.center_rmse;
  d["entries"] = m.entries;
  d["matched_entries"] = m.matched_entries;
  d["gt_entries"] = m.gt_entries;
  return d;
}

}  // namespace

PYBIND11_MODULE(pycohere, m) {
  m.doc() = "LiDAR instance correspondence and contrastive pretraining core";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "hungarian",
      [](const Eigen::MatrixXd& cost) {
        CostMatrix c(static_cast<std::size_t>(cost.rows()), static_cast<std::size_t>(cost.cols()));
        for (Eigen::Index i = 0; i < cost.rows(); ++i) {
          for (Eigen::Index j = 0; j < cost.cols(); ++j) c(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = cost(i, j);
        }
        const Assignment a = hungarian(c);
        return py::make_tuple(a.row_to_col, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment of a square matrix: (column per row, total cost).");

  m.def(
      "hdbscan",
      [](const RowPoints& points, int min_cluster_size, int min_samples, bool allow_single_cluster) {
        const HdbscanResult r =
            hdbscan(to_points(points), HdbscanParams{min_cluster_size, min_samples, allow_single_cluster, 1.0});
        return r.labels;
      },
      py::arg("points"), py::arg("min_cluster_size") = 10, py::arg("min_samples") = 10,
      py::arg("allow_single_cluster") = true, "Cluster labels per point, -1 for noise.");

  m.def(
      "merge_depth",
      [](const std::vector<double>& p, std::size_t k_gt) { return merge_depth(DepthDistribution{p, std::nullopt}, k_gt).p; },
      py::arg("p"), py::arg("k_gt"), "Blend a depth distribution with a one-hot at the 1-based bin k_gt.");

  m.def(
      "transfer_center",
      [](const Vec3& c, const Eigen::Matrix4d& prev, const Eigen::Matrix4d& curr) {
        return transfer_center(c, pose_from_matrix(prev), pose_from_matrix(curr));
      },
      py::arg("center"), py::arg("pose_prev"), py::arg("pose_curr"),
      "Move a center from the previous frame's ego coordinates into the current frame's.");

  m.def(
      "ema_update",
      [](const std::vector<double>& target, const std::vector<double>& online, double momentum) {
        if (target.size() != online.size()) throw Error(ErrorKind::ShapeMismatch, "target and online sizes differ");
        const auto n = static_cast<int>(target.size());
        return ema_update(EncoderParams{1, n - 1, target}, EncoderParams{1, n - 1, online}, momentum).values;
      },
      py::arg("target"), py::arg("online"), py::arg("momentum") = 0.99);

  m.def(
      "contrastive_loss",
      [](const Eigen::MatrixXd& online, const std::vector<int>& instance_of, const Eigen::MatrixXd& targets,
         const Eigen::MatrixXd& background, double temperature) {
        const ContrastiveResult r = contrastive_loss(online, instance_of, targets, background, temperature);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("online"), py::arg("instance_of"), py::arg("targets"), py::arg("background"),
      py::arg("temperature") = 0.1, "Loss and its gradient with respect to the raw online rows.");

  m.def(
      "check_gradients",
      [](std::uint64_t seed, int configs) {
        const GradCheckReport r = check_contrastive_gradients(seed, configs);
        return py::make_tuple(r.passed, r.max_rel_error);
      },
      py::arg("seed") = 0, py::arg("configs") = 50);

  m.def(
      "track_default_scene",
      [](std::uint64_t seed, int frames, int threads) {
        SceneSpec spec = default_scene();
        spec.seed = seed;
        spec.frames = frames;
        const Scene scene = generate(spec, threads);
        const TrackingRun run = run_tracking(scene.frames, PipelineConfig{}, threads);
        py::dict out;
        out["tracks"] = io::format_tracks(run.records);
        out["metrics"] = metrics_dict(score_tracks(run.records, scene.truth));
        return out;
      },
      py::arg("seed") = 42, py::arg("frames") = 17, py::arg("threads") = 1,
      "Generate the built-in 8-object scene, track it and score the tracks.");
}
