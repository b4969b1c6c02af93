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

#include "corporea/arm_sim.hpp"

#include "corporea/errors.hpp"

#include <fmt/core.h>

#include <cmath>
#include <limits>

namespace corporea
{

std::vector<double> evenly_spaced_taxels(std::size_t count)
{
  std::vector<double> offsets(count);
  if (count == 1) {
    offsets[0] = 1.0;
    return offsets;
  }
  for (std::size_t i = 0; i < count; ++i) {
    offsets[i] = static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return offsets;
}

void ArmConfig::validate() const
{
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (!(link_lengths[i] > 0.0) || !std::isfinite(link_lengths[i])) {
      throw DomainError(fmt::format("link_lengths[{}] must be positive, got {}", i, link_lengths[i]));
    }
    if (!(joint_limits[i].lo < joint_limits[i].hi)) {
      throw DomainError(fmt::format(
        "joint_limits[{}] is empty: [{}, {}]", i, joint_limits[i].lo, joint_limits[i].hi));
    }
  }
  if (!(sigma_proprio >= 0.0) || !(sigma_visual >= 0.0)) {
    throw DomainError("sensor noise standard deviations must be non-negative");
  }
  if (!(camera.scale > 0.0)) {
    throw DomainError(fmt::format("camera scale must be positive, got {}", camera.scale));
  }
  if (camera.width <= 0 || camera.height <= 0) {
    throw DomainError(fmt::format("image size must be positive, got {}x{}", camera.width, camera.height));
  }
  if (taxel_layout.empty()) {
    throw DomainError("taxel_layout must contain at least one taxel");
  }
  for (std::size_t i = 0; i < taxel_layout.size(); ++i) {
    const double t = taxel_layout[i];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw DomainError(fmt::format("taxel offset {} = {} outside [0, 1]", i, t));
    }
    if (i > 0 && !(t > taxel_layout[i - 1])) {
      throw DomainError(fmt::format("taxel offsets must be strictly increasing (index {})", i));
    }
  }
  if (!(contact_radius > 0.0)) {
    throw DomainError(fmt::format("contact_radius must be positive, got {}", contact_radius));
  }
}

void Dataset::validate() const
{
  const Eigen::Index n = inputs.rows();
  if (n < 1) {
    throw DomainError("dataset must contain at least one row");
  }
  if (inputs.cols() != 3 || proprio.cols() != 3 || visual_self.cols() != 2 || visual_other.cols() != 2) {
    throw DomainError("dataset column counts do not match the arm layout");
  }
  if (proprio.rows() != n || visual_self.rows() != n || visual_other.rows() != n || tactile.rows() != n) {
    throw DomainError("dataset modalities have different row counts");
  }
}

ArmPoints chain_positions(const Eigen::Vector3d & theta, const std::array<double, kJointCount> & links)
{
  ArmPoints points;
  points[0].setZero();
  double phi = 0.0;
  for (std::size_t k = 0; k < kJointCount; ++k) {
    phi += theta[static_cast<Eigen::Index>(k)];
    points[k + 1] = points[k] + links[k] * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  }
  return points;
}

ArmPoints forward_kinematics(const JointState & state, const ArmConfig & config)
{
  for (std::size_t k = 0; k < kJointCount; ++k) {
    const double angle = state.theta[static_cast<Eigen::Index>(k)];
    const Interval & lim = config.joint_limits[k];
    if (!lim.contains(angle)) {
      throw DomainError(
        fmt::format("joint {} angle {} outside limits [{}, {}]", k, angle, lim.lo, lim.hi));
    }
  }
  return chain_positions(state.theta, config.link_lengths);
}

std::optional<Eigen::Vector2d> project_to_pixels(const Eigen::Vector2d & point, const Camera & camera)
{
  const Eigen::Vector2d px(camera.center.x() + camera.scale * point.x(),
                           camera.center.y() - camera.scale * point.y());
  if (px.x() < 0.0 || px.x() > camera.width || px.y() < 0.0 || px.y() > camera.height) {
    return std::nullopt;
  }
  return px;
}

Eigen::Vector2d unproject(const Eigen::Vector2d & pixel, const Camera & camera)
{
  return {(pixel.x() - camera.center.x()) / camera.scale, (camera.center.y() - pixel.y()) / camera.scale};
}

std::vector<Eigen::Vector2d> taxel_positions(const Eigen::Vector3d & theta, const ArmConfig & config)
{
  const ArmPoints points = chain_positions(theta, config.link_lengths);
  const Eigen::Vector2d & wrist = points[2];
  const Eigen::Vector2d & tip = points[3];
  std::vector<Eigen::Vector2d> out;
  out.reserve(config.taxel_layout.size());
  for (double t : config.taxel_layout) {
    out.emplace_back(wrist + t * (tip - wrist));
  }
  return out;
}

Eigen::VectorXd tactile_contact(const JointState & state, const OtherObject & other, const ArmConfig & config)
{
  forward_kinematics(state, config);  // limit check
  const auto taxels = taxel_positions(state.theta, config);
  Eigen::VectorXd contact(static_cast<Eigen::Index>(taxels.size()));
  for (std::size_t t = 0; t < taxels.size(); ++t) {
    contact[static_cast<Eigen::Index>(t)] =
      (taxels[t] - other.position).norm() <= config.contact_radius ? 1.0 : 0.0;
  }
  return contact;
}

SensorSnapshot synthesize_snapshot(
  const JointState & state, const std::optional<OtherObject> & other, const ArmConfig & config,
  Rng & rng, std::int64_t timestamp)
{
  const ArmPoints points = forward_kinematics(state, config);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SensorSnapshot snap;
  snap.timestamp = timestamp;
  for (Eigen::Index k = 0; k < 3; ++k) {
    snap.proprio[k] = state.theta[k] + config.sigma_proprio * gauss(rng);
  }
  const double du = config.sigma_visual * gauss(rng);
  const double dv = config.sigma_visual * gauss(rng);
  if (auto px = project_to_pixels(points.back(), config.camera)) {
    const Eigen::Vector2d noisy = *px + Eigen::Vector2d(du, dv);
    const Camera & cam = config.camera;
    if (noisy.x() >= 0.0 && noisy.x() <= cam.width && noisy.y() >= 0.0 && noisy.y() <= cam.height) {
      snap.visual_self = noisy;
    }
  }
  if (other) {
    snap.visual_other = project_to_pixels(other->position, config.camera);
    snap.tactile = tactile_contact(state, *other, config);
  } else {
    snap.tactile = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.taxel_count()));
  }
  return snap;
}

Dataset acquire_dataset(
  const ArmConfig & config, std::size_t n, std::uint64_t seed, const std::optional<OtherObject> & other)
{
  if (n == 0) {
    throw DomainError("acquire_dataset: n must be at least 1");
  }
  config.validate();
  Rng rng = make_rng(seed, Stream::acquire);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto taxels = static_cast<Eigen::Index>(config.taxel_count());
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Dataset data;
  data.seed = seed;
  data.inputs.resize(rows, 3);
  data.proprio.resize(rows, 3);
  data.visual_self.setConstant(rows, 2, nan);
  data.visual_other.setConstant(rows, 2, nan);
  data.tactile.resize(rows, taxels);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    JointState state;
    for (std::size_t k = 0; k < kJointCount; ++k) {
      const Interval & lim = config.joint_limits[k];
      state.theta[static_cast<Eigen::Index>(k)] = lim.lo + lim.width() * unit(rng);
    }
    const SensorSnapshot snap = synthesize_snapshot(state, other, config, rng, i);
    data.inputs.row(i) = state.theta.transpose();
    data.proprio.row(i) = snap.proprio.transpose();
    if (snap.visual_self) {
      data.visual_self.row(i) = snap.visual_self->transpose();
    }
    if (snap.visual_other) {
      data.visual_other.row(i) = snap.visual_other->transpose();
    }
    data.tactile.row(i) = snap.tactile.transpose();
  }
  return data;
}

}  // namespace corporea
