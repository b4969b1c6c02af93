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

#include "corporea/pc_estimator.hpp"

#include "corporea/errors.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace corporea
{

namespace
{

std::size_t idx(Modality m) { return static_cast<std::size_t>(m); }

/// Applies f(modality, model, reading, weight) to every term that enters F.
template<class F>
bool for_each_term(const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models, F && f)
{
  bool any = false;
  for (Modality m : kAllModalities) {
    const auto & reading = obs[m];
    if (!belief.is_enabled(m) || !reading) {
      continue;
    }
    const SensoryModel & model = models.at(m);
    if (reading->size() != model.output_dim()) {
      throw DomainError(fmt::format(
        "{} reading has {} entries, model predicts {}", to_string(m), reading->size(), model.output_dim()));
    }
    f(m, model, *reading, belief.precision_of(m) * obs.gain[idx(m)]);
    any = true;
  }
  return any;
}

void require_any(bool any)
{
  if (!any) {
    throw DomainError("free energy: no enabled modality is present in the observation");
  }
}

Eigen::Vector2d pixel_of(const Eigen::Vector2d & point, const Camera & camera)
{
  return {camera.center.x() + camera.scale * point.x(), camera.center.y() - camera.scale * point.y()};
}

}  // namespace

Readings readings_from(const SensorSnapshot & snapshot)
{
  Readings r{};
  r[idx(Modality::proprio)] = Eigen::VectorXd(snapshot.proprio);
  if (snapshot.visual_self) {
    r[idx(Modality::visual)] = Eigen::VectorXd(*snapshot.visual_self);
  }
  if (snapshot.tactile.size() > 0) {
    r[idx(Modality::tactile)] = snapshot.tactile;
  }
  return r;
}

Observation observe(const SensorSnapshot & snapshot) { return Observation{readings_from(snapshot), {1.0, 1.0, 1.0}}; }

BodyBelief BodyBelief::at(const Eigen::VectorXd & mu, std::array<double, kModalityCount> precision)
{
  BodyBelief b;
  b.mu = mu;
  b.prior_mean = mu;
  b.precision = precision;
  return b;
}

void BodyBelief::validate() const
{
  if (mu.size() == 0 || !mu.allFinite()) {
    throw DomainError("belief mu must be a finite, non-empty vector");
  }
  if (prior_mean.size() != mu.size()) {
    throw DomainError("belief prior mean has the wrong dimension");
  }
  if (!(prior_precision >= 0.0)) {
    throw DomainError("prior precision must be non-negative");
  }
  for (Modality m : kAllModalities) {
    if (is_enabled(m) && !(precision_of(m) > 0.0)) {
      throw DomainError(fmt::format("precision of enabled modality {} must be positive", to_string(m)));
    }
  }
}

std::array<double, kModalityCount> default_precisions(const ForwardModelSet & models)
{
  std::array<double, kModalityCount> p{1.0, 1.0, 1.0};
  for (Modality m : kAllModalities) {
    if (models.has(m)) {
      p[idx(m)] = 1.0 / models.at(m).noise_variance();
    }
  }
  return p;
}

double free_energy(const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models)
{
  double f = 0.0;
  const bool any = for_each_term(
    belief, obs, models,
    [&](Modality, const SensoryModel & model, const Eigen::VectorXd & s, double pi) {
      f += 0.5 * pi * (s - model.predict(belief.mu)).squaredNorm();
    });
  require_any(any);
  return f + 0.5 * belief.prior_precision * (belief.mu - belief.prior_mean).squaredNorm();
}

Eigen::VectorXd free_energy_gradient(
  const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models)
{
  Eigen::VectorXd g = belief.prior_precision * (belief.mu - belief.prior_mean);
  const bool any = for_each_term(
    belief, obs, models,
    [&](Modality, const SensoryModel & model, const Eigen::VectorXd & s, double pi) {
      g.noalias() -= pi * model.jacobian(belief.mu).transpose() * (s - model.predict(belief.mu));
    });
  require_any(any);
  return g;
}

BodyBelief step(const BodyBelief & belief, const Observation & obs, const ForwardModelSet & models, double eta)
{
  if (!(eta > 0.0)) {
    throw DomainError(fmt::format("step size must be positive, got {}", eta));
  }
  const Eigen::VectorXd g = free_energy_gradient(belief, obs, models);
  if (!g.allFinite()) {
    throw NumericalError("free-energy gradient is not finite");
  }
  BodyBelief next = belief;
  next.mu -= eta * g;
  next.last_free_energy = free_energy(next, obs, models);
  return next;
}

double curvature_bound(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models)
{
  const Eigen::Index d = belief.mu.size();
  double bound = 0.0;
  for (const Observation & obs : stream) {
    Eigen::MatrixXd h = belief.prior_precision * Eigen::MatrixXd::Identity(d, d);
    for_each_term(belief, obs, models, [&](Modality, const SensoryModel & model, const Eigen::VectorXd &, double pi) {
      const Eigen::MatrixXd j = model.jacobian(belief.mu);
      h.noalias() += pi * j.transpose() * j;
    });
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
    bound = std::max(bound, eig.eigenvalues().maxCoeff());
  }
  return bound;
}

double stable_step_size(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models,
  double cap, double safety)
{
  const double bound = curvature_bound(belief, stream, models);
  return bound > 0.0 ? std::min(cap, safety / bound) : cap;
}

void InferOptions::validate() const
{
  if (!(step_size > 0.0)) {
    throw DomainError(fmt::format("step size must be positive, got {}", step_size));
  }
  if (!(tolerance > 0.0)) {
    throw DomainError(fmt::format("tolerance must be positive, got {}", tolerance));
  }
}

double mean_free_energy(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models)
{
  double total = 0.0;
  for (const Observation & obs : stream) {
    total += free_energy(belief, obs, models);
  }
  return total / static_cast<double>(stream.size());
}

namespace
{

Eigen::VectorXd mean_gradient(
  const BodyBelief & belief, std::span<const Observation> stream, const ForwardModelSet & models)
{
  Eigen::VectorXd g = Eigen::VectorXd::Zero(belief.mu.size());
  for (const Observation & obs : stream) {
    g += free_energy_gradient(belief, obs, models);
  }
  return g / static_cast<double>(stream.size());
}

void refresh_precisions(BodyBelief & belief, const ForwardModelSet & models)
{
  for (Modality m : kAllModalities) {
    if (belief.is_enabled(m) && models.has(m)) {
      const SensoryModel & model = models.at(m);
      belief.precision[idx(m)] = 1.0 / (model.noise_variance() + model.predictive_variance(belief.mu));
    }
  }
}

}  // namespace

InferenceResult infer(
  const BodyBelief & initial, std::span<const Observation> stream, const ForwardModelSet & models,
  const InferOptions & options)
{
  options.validate();
  initial.validate();
  if (stream.empty()) {
    throw DomainError("infer: observation stream is empty");
  }
  if (initial.mu.size() != models.latent_dim()) {
    throw DomainError(fmt::format(
      "infer: belief has dimension {}, models expect {}", initial.mu.size(), models.latent_dim()));
  }

  InferenceResult result;
  result.belief = initial;
  BodyBelief & belief = result.belief;
  const std::size_t cycle = stream.size();
  auto converged_now = [&] {
    return mean_gradient(belief, stream, models).lpNorm<Eigen::Infinity>() < options.tolerance;
  };

  if (options.precision_mode == PrecisionMode::predictive_variance) {
    refresh_precisions(belief, models);
  }
  belief.last_free_energy = free_energy(belief, stream[0], models);
  result.mu_trajectory.push_back(belief.mu);
  result.free_energy.push_back(belief.last_free_energy);

  for (std::size_t t = 0; t < options.max_steps; ++t) {
    if (options.early_stop && t % cycle == 0 && converged_now()) {
      result.converged = true;
      break;
    }
    if (options.precision_mode == PrecisionMode::predictive_variance) {
      refresh_precisions(belief, models);
    }
    belief = step(belief, stream[t % cycle], models, options.step_size);
    ++result.steps;
    result.mu_trajectory.push_back(belief.mu);
    result.free_energy.push_back(belief.last_free_energy);
  }
  if (!result.converged) {
    result.converged = converged_now();
  }
  return result;
}

Eigen::VectorXd reconstruct_modality(const BodyBelief & belief, const ForwardModelSet & models, Modality m)
{
  return models.at(m).predict(belief.mu);
}

std::string_view to_string(Stimulation s)
{
  switch (s) {
    case Stimulation::none:
      return "none";
    case Stimulation::synchronous:
      return "synchronous";
    case Stimulation::asynchronous:
      return "asynchronous";
  }
  return "unknown";
}

Stimulation parse_stimulation(std::string_view name)
{
  if (name == "none") return Stimulation::none;
  if (name == "synchronous" || name == "sync") return Stimulation::synchronous;
  if (name == "asynchronous" || name == "async") return Stimulation::asynchronous;
  throw DomainError(fmt::format("unknown stimulation '{}'", name));
}

void PerturbationSchedule::validate() const
{
  if (!visual_offset.allFinite()) {
    throw DomainError("visual offset must be finite");
  }
  if (!(precision_gain >= 1.0)) {
    throw DomainError(fmt::format("precision gain must be >= 1, got {}", precision_gain));
  }
  if (!(step_size > 0.0)) {
    throw DomainError(fmt::format("step size must be positive, got {}", step_size));
  }
  if (n_steps < 1) {
    throw DomainError("n_steps must be at least 1");
  }
  if (stimulation_period < 2) {
    throw DomainError("stimulation period must be at least 2 frames");
  }
}

bool PerturbationSchedule::seen_stroke(std::size_t frame) const
{
  return stimulation != Stimulation::none && frame % stimulation_period < stimulation_period / 2;
}

bool PerturbationSchedule::felt_stroke(std::size_t frame) const
{
  switch (stimulation) {
    case Stimulation::none:
      return false;
    case Stimulation::synchronous:
      return seen_stroke(frame);
    case Stimulation::asynchronous:
      return seen_stroke(frame + stimulation_period / 2);
  }
  return false;
}

std::vector<Observation> rhi_stream(
  const PerturbationSchedule & schedule, const ArmConfig & config, const Eigen::Vector3d & true_theta,
  std::size_t taxel_count, Rng & rng)
{
  schedule.validate();
  if (schedule.stimulated_taxel >= taxel_count) {
    throw DomainError(fmt::format(
      "stimulated taxel {} out of range for {} taxels", schedule.stimulated_taxel, taxel_count));
  }
  const double gain = schedule.stimulation == Stimulation::synchronous ? schedule.precision_gain : 1.0;
  std::vector<Observation> stream(schedule.stimulation_period);
  for (std::size_t f = 0; f < stream.size(); ++f) {
    const SensorSnapshot snap =
      synthesize_snapshot(JointState{true_theta}, std::nullopt, config, rng, static_cast<std::int64_t>(f));
    Observation & obs = stream[f];
    obs.readings[idx(Modality::proprio)] = Eigen::VectorXd(snap.proprio);
    if (schedule.stimulation != Stimulation::none && snap.visual_self) {
      obs.readings[idx(Modality::visual)] = Eigen::VectorXd(*snap.visual_self + schedule.visual_offset);
    }
    Eigen::VectorXd touch = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(taxel_count));
    if (schedule.felt_stroke(f)) {
      touch[static_cast<Eigen::Index>(schedule.stimulated_taxel)] = 1.0;
    }
    obs.readings[idx(Modality::tactile)] = touch;
    obs.gain[idx(Modality::visual)] = gain;
    obs.gain[idx(Modality::tactile)] = gain;
  }
  return stream;
}

namespace
{

Eigen::VectorXd cycle_mean(const std::vector<Eigen::VectorXd> & trajectory, std::size_t end, std::size_t cycle)
{
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(trajectory.front().size());
  for (std::size_t i = end - cycle; i < end; ++i) {
    avg += trajectory[i];
  }
  return avg / static_cast<double>(cycle);
}

/// Runs the stepped dynamics for the full schedule. The reported state is mu
/// averaged over the final stimulation cycle; convergence means that average
/// moved by less than `tolerance` since the previous cycle.
DriftReport drive(
  const ForwardModelSet & models, const PerturbationSchedule & schedule, std::span<const Observation> stream,
  const BodyBelief & initial, double tolerance)
{
  DriftReport report;
  report.stimulation = schedule.stimulation;
  report.step_size = stable_step_size(initial, stream, models, schedule.step_size);

  InferOptions options;
  options.step_size = report.step_size;
  options.tolerance = tolerance;
  options.max_steps = schedule.n_steps;
  options.early_stop = false;
  InferenceResult run = infer(initial, stream, models, options);

  const std::size_t cycle = stream.size();
  const std::size_t end = run.mu_trajectory.size();
  if (end > 2 * cycle) {
    report.final_mu = cycle_mean(run.mu_trajectory, end, cycle);
    const Eigen::VectorXd previous = cycle_mean(run.mu_trajectory, end - cycle, cycle);
    report.converged = (report.final_mu - previous).lpNorm<Eigen::Infinity>() < tolerance;
  } else {
    report.final_mu = run.mu_trajectory.back();
    report.converged = run.converged;
  }
  report.mu_trajectory = std::move(run.mu_trajectory);
  report.free_energy = std::move(run.free_energy);
  return report;
}

/// Same stream with the visual displacement removed.
std::vector<Observation> undisplaced(std::vector<Observation> stream, const Eigen::Vector2d & offset)
{
  for (Observation & obs : stream) {
    if (auto & visual = obs.readings[idx(Modality::visual)]) {
      *visual -= offset;
    }
  }
  return stream;
}

double along(const Eigen::Vector2d & delta, const Eigen::Vector2d & offset)
{
  const double norm = offset.norm();
  return norm > 0.0 ? delta.dot(offset) / norm : 0.0;
}

}  // namespace

DriftReport run_rhi(
  const ForwardModelSet & models, const PerturbationSchedule & schedule, const ArmConfig & config,
  const Eigen::Vector3d & true_theta, const BodyBelief & belief_template, Rng & rng, double tolerance)
{
  if (models.latent_dim() != 3) {
    throw DomainError("run_rhi: arm models must take a 3-dimensional latent state");
  }
  const std::size_t taxels = models.has(Modality::tactile)
                               ? static_cast<std::size_t>(models.at(Modality::tactile).output_dim())
                               : config.taxel_count();
  const std::vector<Observation> stream = rhi_stream(schedule, config, true_theta, taxels, rng);

  BodyBelief initial = belief_template;
  initial.mu = true_theta;
  initial.prior_mean = true_theta;
  if (!models.has(Modality::tactile)) {
    initial.enabled[idx(Modality::tactile)] = false;
  }

  DriftReport report = drive(models, schedule, stream, initial, tolerance);
  const DriftReport baseline =
    drive(models, schedule, undisplaced(stream, schedule.visual_offset), initial, tolerance);
  report.converged = report.converged && baseline.converged;
  auto ee_pixel = [&](const Eigen::VectorXd & mu) {
    return pixel_of(chain_positions(mu, config.link_lengths).back(), config.camera);
  };
  report.ee_pixels.reserve(report.mu_trajectory.size());
  for (const auto & mu : report.mu_trajectory) {
    report.ee_pixels.push_back(ee_pixel(mu));
  }
  report.drift = along(ee_pixel(report.final_mu) - ee_pixel(baseline.final_mu), schedule.visual_offset);
  return report;
}

DriftReport run_rhi_linear(
  double proprio_precision, double visual_precision, const PerturbationSchedule & schedule, double tolerance)
{
  schedule.validate();
  ForwardModelSet models;
  models.set(Modality::proprio, std::make_shared<IdentityModel>(1, 1.0 / proprio_precision));
  models.set(Modality::visual, std::make_shared<IdentityModel>(1, 1.0 / visual_precision));

  const double gain = schedule.stimulation == Stimulation::synchronous ? schedule.precision_gain : 1.0;
  std::vector<Observation> stream(schedule.stimulation_period);
  for (Observation & obs : stream) {
    obs.readings[idx(Modality::proprio)] = Eigen::VectorXd::Zero(1);
    if (schedule.stimulation != Stimulation::none) {
      obs.readings[idx(Modality::visual)] = Eigen::VectorXd::Constant(1, schedule.visual_offset.x());
    }
    obs.gain[idx(Modality::visual)] = gain;
  }

  BodyBelief initial = BodyBelief::at(Eigen::VectorXd::Zero(1), {proprio_precision, visual_precision, 1.0});
  initial.enabled[idx(Modality::tactile)] = false;
  DriftReport report = drive(models, schedule, stream, initial, tolerance);
  for (const auto & mu : report.mu_trajectory) {
    report.ee_pixels.emplace_back(mu[0], 0.0);
  }
  report.drift = along(Eigen::Vector2d(report.final_mu[0], 0.0), Eigen::Vector2d(schedule.visual_offset.x(), 0.0));
  return report;
}

}  // namespace corporea
