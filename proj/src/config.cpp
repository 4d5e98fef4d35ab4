#include "cohere/config.hpp"

#include "cohere/error.hpp"

#include "json_fields.hpp"

#include <cmath>

namespace cohere {

using detail::Fields;
using nlohmann::json;

namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, std::string(field) + " " + rule);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void PipelineConfig::validate() const {
  require(ground.n_segments >= 1, "ground.n_segments", "must be >= 1");
  require(positive(ground.bin_width), "ground.bin_width", "must be positive");
  require(positive(ground.max_range), "ground.max_range", "must be positive");
  require(positive(ground.max_slope), "ground.max_slope", "must be positive");
  require(positive(ground.line_eps), "ground.line_eps", "must be positive");
  require(positive(ground.max_step), "ground.max_step", "must be positive");
  require(positive(ground.d_ground), "ground.d_ground", "must be positive");
  require(positive(ground.max_start_height), "ground.max_start_height", "must be positive");
  require(std::isfinite(ground.ground_z), "ground.ground_z", "must be finite");

  require(cluster.hdbscan.min_cluster_size >= 2, "cluster.min_cluster_size", "must be >= 2");
  require(cluster.hdbscan.min_samples >= 1, "cluster.min_samples", "must be >= 1");
  require(positive(cluster.hdbscan.grid_cell), "cluster.grid_cell", "must be positive");
  require(cluster.tau_n >= 1, "cluster.tau_n", "must be >= 1");
  require(positive(cluster.max_range), "cluster.max_range", "must be positive");

  require(positive(assoc.tau_d), "assoc.tau_d", "must be positive");
  require(assoc.history >= 1, "assoc.history", "must be >= 1");

  require(learn.n_foreground >= 1, "learn.n_foreground", "must be >= 1");
  require(learn.n_background >= 0, "learn.n_background", "must be >= 0");
  require(positive(learn.temperature), "learn.temperature", "must be positive");
  require(learn.momentum >= 0.0 && learn.momentum <= 1.0, "learn.momentum", "must lie in [0, 1]");
  require(learn.dropout >= 0.0 && learn.dropout < 1.0, "learn.dropout", "must lie in [0, 1)");
  require(std::isfinite(learn.learning_rate) && learn.learning_rate >= 0.0, "learn.learning_rate", "must be >= 0");
  require(learn.channels >= 1, "learn.channels", "must be >= 1");
  require(learn.occupancy_dilation >= 0, "learn.occupancy_dilation", "must be >= 0");
  learn.bev.validate();
  require(learn.depth.count >= 1, "learn.depth.count", "must be >= 1");
  require(positive(learn.depth.delta), "learn.depth.delta", "must be positive");
  require(std::isfinite(learn.depth.d0) && learn.depth.d0 >= 0.0, "learn.depth.d0", "must be >= 0");

  require(rig.cameras >= 1, "rig.cameras", "must be >= 1");
  require(rig.height >= 1 && rig.width >= 1, "rig.height/width", "must be >= 1");
  require(positive(rig.focal), "rig.focal", "must be positive");
  require(std::isfinite(rig.mount_height), "rig.mount_height", "must be finite");
  require(positive(rig.depth_sigma), "rig.depth_sigma", "must be positive");
  require(std::isfinite(rig.depth_bias) && rig.depth_bias >= 0.0, "rig.depth_bias", "must be >= 0");

  require(pretrain_steps >= 0, "pretrain.steps", "must be >= 0");
  require(positive(init_scale), "pretrain.init_scale", "must be positive");
}

PipelineConfig parse_config(const std::string& text, const std::string& source) {
  PipelineConfig c;
  try {
    const json doc = json::parse(text);
    Fields top(doc, source);
    if (const json* j = top.sub("ground")) {
      Fields f(*j, "ground");
      f.get("n_segments", c.ground.n_segments);
      f.get("bin_width", c.ground.bin_width);
      f.get("max_range", c.ground.max_range);
      f.get("max_slope", c.ground.max_slope);
      f.get("line_eps", c.ground.line_eps);
      f.get("max_step", c.ground.max_step);
      f.get("d_ground", c.ground.d_ground);
      f.get("max_start_height", c.ground.max_start_height);
      f.get("ground_z", c.ground.ground_z);
      f.finish();
    }
    if (const json* j = top.sub("cluster")) {
      Fields f(*j, "cluster");
      f.get("min_cluster_size", c.cluster.hdbscan.min_cluster_size);
      f.get("min_samples", c.cluster.hdbscan.min_samples);
      f.get("allow_single_cluster", c.cluster.hdbscan.allow_single_cluster);
      f.get("grid_cell", c.cluster.hdbscan.grid_cell);
      f.get("tau_n", c.cluster.tau_n);
      f.get("max_range", c.cluster.max_range);
      f.finish();
    }
    if (const json* j = top.sub("assoc")) {
      Fields f(*j, "assoc");
      f.get("tau_d", c.assoc.tau_d);
      f.get("history", c.assoc.history);
      f.finish();
    }
    if (const json* j = top.sub("learn")) {
      Fields f(*j, "learn");
      f.get("n_foreground", c.learn.n_foreground);
      f.get("n_background", c.learn.n_background);
      f.get("temperature", c.learn.temperature);
      f.get("momentum", c.learn.momentum);
      f.get("dropout", c.learn.dropout);
      f.get("learning_rate", c.learn.learning_rate);
      f.get("channels", c.learn.channels);
      f.get("occupancy_dilation", c.learn.occupancy_dilation);
      if (const json* b = f.sub("bev")) {
        Fields g(*b, "learn.bev");
        g.get("x_min", c.learn.bev.x_min);
        g.get("x_max", c.learn.bev.x_max);
        g.get("y_min", c.learn.bev.y_min);
        g.get("y_max", c.learn.bev.y_max);
        g.get("cell", c.learn.bev.cell);
        g.finish();
      }
      if (const json* d = f.sub("depth")) {
        Fields g(*d, "learn.depth");
        g.get("count", c.learn.depth.count);
        g.get("d0", c.learn.depth.d0);
        g.get("delta", c.learn.depth.delta);
        g.finish();
      }
      f.finish();
    }
    if (const json* j = top.sub("rig")) {
      Fields f(*j, "rig");
      f.get("cameras", c.rig.cameras);
      f.get("height", c.rig.height);
      f.get("width", c.rig.width);
      f.get("focal", c.rig.focal);
      f.get("mount_height", c.rig.mount_height);
      f.get("depth_sigma", c.rig.depth_sigma);
      f.get("depth_bias", c.rig.depth_bias);
      f.finish();
    }
    if (const json* j = top.sub("pretrain")) {
      Fields f(*j, "pretrain");
      f.get("steps", c.pretrain_steps);
      f.get("init_scale", c.init_scale);
      f.finish();
    }
    top.finish();
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, source + " at byte " + std::to_string(e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, source + ": " + e.what());
  }
  c.validate();
  return c;
}

std::string format_config(const PipelineConfig& c) {
  const json doc = {
      {"ground",
       {{"n_segments", c.ground.n_segments},
        {"bin_width", c.ground.bin_width},
        {"max_range", c.ground.max_range},
        {"max_slope", c.ground.max_slope},
        {"line_eps", c.ground.line_eps},
        {"max_step", c.ground.max_step},
        {"d_ground", c.ground.d_ground},
        {"max_start_height", c.ground.max_start_height},
        {"ground_z", c.ground.ground_z}}},
      {"cluster",
       {{"min_cluster_size", c.cluster.hdbscan.min_cluster_size},
        {"min_samples", c.cluster.hdbscan.min_samples},
        {"allow_single_cluster", c.cluster.hdbscan.allow_single_cluster},
        {"grid_cell", c.cluster.hdbscan.grid_cell},
        {"tau_n", c.cluster.tau_n},
        {"max_range", c.cluster.max_range}}},
      {"assoc", {{"tau_d", c.assoc.tau_d}, {"history", c.assoc.history}}},
      {"learn",
       {{"n_foreground", c.learn.n_foreground},
        {"n_background", c.learn.n_background},
        {"temperature", c.learn.temperature},
        {"momentum", c.learn.momentum},
        {"dropout", c.learn.dropout},
        {"learning_rate", c.learn.learning_rate},
        {"channels", c.learn.channels},
        {"occupancy_dilation", c.learn.occupancy_dilation},
        {"bev",
         {{"x_min", c.learn.bev.x_min},
          {"x_max", c.learn.bev.x_max},
          {"y_min", c.learn.bev.y_min},
          {"y_max", c.learn.bev.y_max},
          {"cell", c.learn.bev.cell}}},
        {"depth", {{"count", c.learn.depth.count}, {"d0", c.learn.depth.d0}, {"delta", c.learn.depth.delta}}}}},
      {"rig",
       {{"cameras", c.rig.cameras},
        {"height", c.rig.height},
        {"width", c.rig.width},
        {"focal", c.rig.focal},
        {"mount_height", c.rig.mount_height},
        {"depth_sigma", c.rig.depth_sigma},
        {"depth_bias", c.rig.depth_bias}}},
      {"pretrain", {{"steps", c.pretrain_steps}, {"init_scale", c.init_scale}}},
  };
  return doc.dump(2) + "\n";
}

}  // namespace cohere
