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

#ifndef CORPOREA__ARM_SIM_HPP_
#define CORPOREA__ARM_SIM_HPP_

#include "corporea/rng.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace corporea
{

inline constexpr std::size_t kJointCount = 3;

struct Interval
{
  double lo;
  double hi;

  bool contains(double x) const { return x >= lo && x <= hi; }
  double width() const { return hi - lo; }
};

/// Orthographic stand-in for the robot eye: u = cx + s*x, v = cy - s*y.
struct Camera
{
  Eigen::Vector2d center{320.0, 240.0};
  double scale = 300.0;  // px per metre
  int width = 640;
  int height = 480;
};

/// `count` taxels spread evenly over link 3, from the wrist joint to the tip.
std::vector<double> evenly_spaced_taxels(std::size_t count);

struct ArmConfig
{
  std::array<double, kJointCount> link_lengths{0.30, 0.25, 0.15};
  std::array<Interval, kJointCount> joint_limits{{{-2.5, 2.5}, {-2.5, 2.5}, {-2.5, 2.5}}};
  double sigma_proprio = 0.01;  // rad
  double sigma_visual = 1.0;    // px
  Camera camera;
  std::vector<double> taxel_layout = evenly_spaced_taxels(8);
  double contact_radius = 0.015;  // m

  /// Throws DomainError on the first violated invariant.
  void validate() const;
  std::size_t taxel_count() const { return taxel_layout.size(); }
  double reach() const { return link_lengths[0] + link_lengths[1] + link_lengths[2]; }
};

struct JointState
{
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
};

struct OtherObject
{
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

/// One synchronized multimodal reading. Tactile entries are 0 or 1
/// (raw skin value 255 normalized).
struct SensorSnapshot
{
  Eigen::Vector3d proprio = Eigen::Vector3d::Zero();
  std::optional<Eigen::Vector2d> visual_self;
  std::optional<Eigen::Vector2d> visual_other;
  Eigen::VectorXd tactile;
  std::int64_t timestamp = 0;
};

/// Row-aligned training data. Absent visual readings are stored as NaN.
struct Dataset
{
  Eigen::MatrixXd inputs;        // n x 3 true joint angles
  Eigen::MatrixXd proprio;       // n x 3
  Eigen::MatrixXd visual_self;   // n x 2
  Eigen::MatrixXd visual_other;  // n x 2
  Eigen::MatrixXd tactile;       // n x T
  std::uint64_t seed = 0;

  Eigen::Index rows() const { return inputs.rows(); }
  void validate() const;
};

/// Origin, elbow, wrist, end-effector.
using ArmPoints = std::array<Eigen::Vector2d, kJointCount + 1>;

/// Planar chain without limit checks. Used where the argument is an estimate
/// rather than a physical configuration.
ArmPoints chain_positions(const Eigen::Vector3d & theta, const std::array<double, kJointCount> & links);

/// Throws DomainError naming the joint index when an angle is out of limits.
ArmPoints forward_kinematics(const JointState & state, const ArmConfig & config);

std::optional<Eigen::Vector2d> project_to_pixels(const Eigen::Vector2d & point, const Camera & camera);
Eigen::Vector2d unproject(const Eigen::Vector2d & pixel, const Camera & camera);

/// Workspace positions of every taxel, interpolated along link 3.
std::vector<Eigen::Vector2d> taxel_positions(const Eigen::Vector3d & theta, const ArmConfig & config);

Eigen::VectorXd tactile_contact(const JointState & state, const OtherObject & other, const ArmConfig & config);

/// Noise is always drawn (scaled by the configured sigma, possibly zero) so
/// the generator advances identically whatever the noise levels are.
SensorSnapshot synthesize_snapshot(
  const JointState & state, const std::optional<OtherObject> & other, const ArmConfig & config,
  Rng & rng, std::int64_t timestamp = 0);

/// Uniform joint-space sampling within limits, one snapshot per sample.
Dataset acquire_dataset(
  const ArmConfig & config, std::size_t n, std::uint64_t seed,
  const std::optional<OtherObject> & other = std::nullopt);

}  // namespace corporea

#endif  // CORPOREA__ARM_SIM_HPP_
