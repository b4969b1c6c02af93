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

#ifndef CORPOREA__PC_ESTIMATOR_HPP_
#define CORPOREA__PC_ESTIMATOR_HPP_

#include "corporea/arm_sim.hpp"
#include "corporea/gp_forward.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace corporea
{

/// Sensor readings keyed by modality, in raw units. An empty slot means the
/// modality was not observed this frame.
using Readings = std::array<std::optional<Eigen::VectorXd>, kModalityCount>;

Readings readings_from(const SensorSnapshot & snapshot);

/// One frame of evidence: readings plus per-modality precision multipliers.
struct Observation
{
  Readings readings{};
  std::array<double, kModalityCount> gain{1.0, 1.0, 1.0};

  const std::optional<Eigen::VectorXd> & operator[](Modality m) const
  {
    return readings[static_cast<std::size_t>(m)];
  }
};

Observation observe(const SensorSnapshot & snapshot);

/// Mode of q(mu) together with the precisions that weight each error term.
struct BodyBelief
{
  Eigen::VectorXd mu;
  Eigen::VectorXd prior_mean;
  double prior_precision = 0.0;
  std::array<double, kModalityCount> precision{1.0, 1.0, 1.0};
  std::array<bool, kModalityCount> enabled{true, true, true};
  double last_free_energy = std::numeric_limits<double>::quiet_NaN();

  /// Belief at `mu` with the prior centred on it.
  static BodyBelief at(const Eigen::VectorXd & mu, std::array<double, kModalityCount> precision);

  double precision_of(Modality m) const { return precision[static_cast<std::size_t>(m)]; }
  bool is_enabled(Modality m) const { return enabled[static_cast<std::size_t>(m)]; }
  void validate() const;
};

/// Precisions equal to 1 / noise variance of each available model.
std::array<double, kModalityCount> default_precisions(const ForwardModelSet & models);

/// F = sum_m (Pi_m/2) |s_m - g_m(mu)|^2 + (Pi0/2) |mu - mu0|^2 over enabled,
/// observed modalities. Throws DomainError when no enabled modality is observed.
double free_energy(const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models);

Eigen::VectorXd free_energy_gradient(
  const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models);

/// One Euler step mu <- mu - eta dF/dmu.
BodyBelief step(const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models, double eta);

/// Largest eigenvalue of the Gauss-Newton curvature at the belief, taken as
/// the maximum over the observations.
double curvature_bound(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models);

/// Step size `safety / curvature_bound`, capped at `cap`.
double stable_step_size(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models,
  double cap, double safety = 0.5);

enum class PrecisionMode {
  constant,
  /// Pi_m = 1 / (noise variance + GP predictive variance at mu), refreshed
  /// before each step and held fixed within it.
  predictive_variance,
};

struct InferOptions
{
  double step_size = 0.05;
  double tolerance = 1e-6;
  std::size_t max_steps = 2000;
  bool early_stop = true;
  PrecisionMode precision_mode = PrecisionMode::constant;

  void validate() const;
};

struct InferenceResult
{
  BodyBelief belief;
  bool converged = false;
  std::size_t steps = 0;
  std::vector<Eigen::VectorXd> mu_trajectory;  // steps + 1 entries
  std::vector<double> free_energy;             // F at each trajectory entry
};

/// Cycles through `stream` (a single observation is repeated). Convergence
/// is judged on the gradient averaged over one full cycle, evaluated at the
/// current mu at cycle boundaries: |dF/dmu|_inf < tolerance.
InferenceResult infer(
  const BodyBelief & initial, std::span<const Observation> stream, const ForwardModelSet & models,
  const InferOptions & options);

/// Predicted reading g_m(mu) for a modality, whether or not it was observed.
Eigen::VectorXd reconstruct_modality(const BodyBelief & belief, const ForwardModelSet & models, Modality m);

/// Cycle-averaged free energy, the objective the stepped dynamics settle on.
double mean_free_energy(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models);

// -- Rubber-hand-illusion experiment ---------------------------------------

enum class Stimulation { none, synchronous, asynchronous };

std::string_view to_string(Stimulation s);
Stimulation parse_stimulation(std::string_view name);

/// The displaced arm is seen only while it is being stroked, so `none`
/// presents no visual evidence. Strokes fill the first half of every
/// `stimulation_period` frames; under asynchronous stimulation the felt
/// strokes lag the seen ones by half a period.
struct PerturbationSchedule
{
  Eigen::Vector2d visual_offset{30.0, 0.0};  // px
  Stimulation stimulation = Stimulation::synchronous;
  double precision_gain = 4.0;
  std::size_t n_steps = 3000;
  double step_size = 0.05;
  std::size_t stimulation_period = 10;
  std::size_t stimulated_taxel = 4;

  void validate() const;
  bool seen_stroke(std::size_t frame) const;
  bool felt_stroke(std::size_t frame) const;
};

struct DriftReport
{
  Stimulation stimulation = Stimulation::none;
  std::vector<Eigen::VectorXd> mu_trajectory;  // n_steps + 1 entries
  std::vector<double> free_energy;
  std::vector<Eigen::Vector2d> ee_pixels;
  double step_size = 0.0;  // effective Euler step
  double drift = 0.0;      // px along the offset direction
  bool converged = false;
  Eigen::VectorXd final_mu;  // mu averaged over the last stimulation cycle
};

/// One stimulation cycle of observations for the arm experiment.
std::vector<Observation> rhi_stream(
  const PerturbationSchedule & schedule, const ArmConfig & config, const Eigen::Vector3d & true_theta,
  std::size_t taxel_count, Rng & rng);

/// Starts from the true configuration and reports how far the estimated
/// end-effector moves along the visual offset, in pixels.
DriftReport run_rhi(
  const ForwardModelSet & models, const PerturbationSchedule & schedule, const ArmConfig & config,
  const Eigen::Vector3d & true_theta, const BodyBelief & belief_template, Rng & rng,
  double tolerance = 1e-6);

/// One-dimensional linear version: proprioception and vision both read the
/// latent coordinate directly, vision displaced by offset.x(). The
/// precision-weighted equilibrium is offset * Pi_v' / (Pi_p + Pi_v') with
/// Pi_v' the gained visual precision.
DriftReport run_rhi_linear(
  double proprio_precision, double visual_precision, const PerturbationSchedule & schedule,
  double tolerance = 1e-12);

}  // namespace corporea

#endif  // CORPOREA__PC_ESTIMATOR_HPP_
