#pragma once

#include "cohere/assoc.hpp"
#include "cohere/cluster.hpp"
#include "cohere/ground.hpp"
#include "cohere/learn.hpp"
#include "cohere/synth.hpp"

#include <string>

namespace cohere {

/// Every tunable of the tracking and pretraining commands.
struct PipelineConfig {
  GroundParams ground;
  ClusterParams cluster;
  AssocParams assoc;
  LearnParams learn;
  CameraRigSpec rig;
  int pretrain_steps = 100;
  double init_scale = 0.5;  // encoder weights start uniform in [-scale, scale]

  /// Throws InvalidConfig naming the first offending field.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig parse_config(const std::string& text, const std::string& source = "<config>");
std::string format_config(const PipelineConfig& config);

}  // namespace cohere
