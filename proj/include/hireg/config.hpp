#pragma once

#include <filesystem>
#include "json.hpp"

#include "hireg/matching.hpp"
#include "hireg/metrics.hpp"
#include "hireg/scene.hpp"
#include "hireg/training.hpp"

namespace hireg {

struct SamplingConfig {
  SamplingRadii radii;
  std::size_t n_p = 256;
  PositiveReduction positive_reduction = PositiveReduction::kMin;
};

/// Every tunable of the toolkit, grouped by module.
struct RunConfig {
  DescriptorParams descriptors;
  SamplingConfig sampling;
  CircleLossParams circle_loss;
  TargetScores targets;
  LossWeights loss_weights;
  RansacParams ransac;
  MatchingParams matching;
  MetricThresholds metrics;
  std::uint64_t seed = 0;

  RegistrationConfig registration() const;
};

void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RegistrationResult& result);
nlohmann::json to_json(const BenchmarkReport& report);

}  // namespace hireg
