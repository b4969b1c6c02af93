// Copyright 2026 The Corporea Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CORPOREA__HARNESS_HPP_
#define CORPOREA__HARNESS_HPP_

#include "corporea/arm_sim.hpp"
#include "corporea/gp_forward.hpp"
#include "corporea/pc_estimator.hpp"
#include "corporea/self_grid.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace corporea::harness
{

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char * kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kNumerical = 3 };

struct GpConfig
{
  KernelParams params;
  /// Candidate lengthscales for LML selection; empty keeps params.lengthscale.
  std::vector<double> lengthscale_grid = log_spaced(0.25, 4.0, 9);
};

struct EstimatorConfig
{
  /// Unset entries default to 1 / model noise variance.
  std::array<std::optional<double>, kModalityCount> precisions{std::nullopt, std::nullopt, 1.0};
  double prior_precision = 0.0;
  /// Upper bound; the effective step is capped by the curvature bound.
  double step_size = 0.05;
  double tolerance = 1e-6;
  std::size_t max_steps = 2000;
  PrecisionMode precision_mode = PrecisionMode::constant;
};

struct RhiConfig
{
  PerturbationSchedule schedule;
  Eigen::Vector3d true_theta{0.4, 0.8, -0.6};
  double toy_proprio_precision = 1.0;
  double toy_visual_precision = 3.0;
};

struct RunConfig
{
  ArmConfig arm;
  std::optional<OtherObject> other = OtherObject{{0.35, 0.35}};
  std::size_t dataset_size = 500;
  GpConfig gp_visual;
  GpConfig gp_tactile;
  double proprio_noise_variance = 1e-4;
  EstimatorConfig estimator;
  RhiConfig rhi;
  GridParams grid;
  SceneParams scene;
  std::size_t snapshot_every = 50;
  std::size_t heldout = 100;
  std::uint64_t seed = 42;
  std::string output_dir = "out";

  void validate() const;
};

json config_to_json(const RunConfig & config);
/// Missing keys take defaults; unknown keys are rejected.
RunConfig config_from_json(const json & j);
RunConfig load_config(const fs::path & path);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string & bytes);

struct CommandOutput
{
  std::vector<std::string> files;  // relative to the output directory
  json summary;
};

CommandOutput cmd_acquire(const RunConfig & config, const fs::path & out);
CommandOutput cmd_train(const RunConfig & config, const fs::path & out, const fs::path & dataset);
CommandOutput cmd_rhi(const RunConfig & config, const fs::path & out, const fs::path & models, bool toy);
CommandOutput cmd_selfdetect(const RunConfig & config, const fs::path & out);
CommandOutput cmd_reconstruct(
  const RunConfig & config, const fs::path & out, const fs::path & models, Modality drop);

/// Reads model_<modality>.json files written by cmd_train.
ForwardModelSet load_models(const fs::path & dir);
std::array<double, kModalityCount> resolve_precisions(const EstimatorConfig & config, const ForwardModelSet & models);

/// Merges one stage into out/manifest.json (written once per invocation).
void write_manifest(
  const fs::path & out, const RunConfig & config, const std::string & stage, const CommandOutput & output,
  double wall_clock_s);

/// Re-hashes every file listed in the manifest. Returns the first problem
/// found, or an empty string when all entries match.
std::string verify_manifest(const fs::path & out);

}  // namespace corporea::harness

#endif  // CORPOREA__HARNESS_HPP_
