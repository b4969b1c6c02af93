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

#ifndef CORPOREA__SELF_GRID_HPP_
#define CORPOREA__SELF_GRID_HPP_

#include "corporea/arm_sim.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace corporea
{

inline constexpr double kLogOddsMin = -6.0;
inline constexpr double kLogOddsMax = 6.0;

double log_odds(double p);
double probability(double log_odds);
double clamp_log_odds(double l);

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Decimated visual field of inbody log-odds. Rows index image v, columns u.
struct BeliefGrid
{
  Eigen::MatrixXd log_odds;
  int decimation = 10;  // px per cell

  static BeliefGrid uniform(Eigen::Index rows, Eigen::Index cols, int decimation, double prior = 0.5);
  Eigen::MatrixXd probabilities() const;
  Eigen::Index rows() const { return log_odds.rows(); }
  Eigen::Index cols() const { return log_odds.cols(); }
};

enum class Direction : std::size_t { up = 0, down = 1, left = 2, right = 3 };
inline constexpr std::array<Direction, 4> kDirections{Direction::up, Direction::down, Direction::left, Direction::right};

/// (row, col) step taken by content moving in direction d.
std::array<int, 2> offset_of(Direction d);

enum class VelocityMode { global, per_cell };

/// Four-direction velocities in cells/frame. Global mode stores one value
/// per direction (1x1 matrices); per-cell mode stores a matrix per direction.
struct VelocityField
{
  VelocityMode mode = VelocityMode::global;
  std::array<Eigen::MatrixXd, 4> v{
    Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1),
    Eigen::MatrixXd::Zero(1, 1)};

  static VelocityField global(double up = 0.0, double down = 0.0, double left = 0.0, double right = 0.0);
  static VelocityField per_cell(Eigen::Index rows, Eigen::Index cols);

  double at(Direction d, Eigen::Index row, Eigen::Index col) const;
  /// (stay, up, down, left, right), normalized to sum to one.
  std::array<double, 5> transition_weights(Eigen::Index row, Eigen::Index col) const;
};

/// Saliency activations in [0,1], same shape as the grid.
struct SaliencyFrame
{
  Eigen::MatrixXd activation;
  std::int64_t index = 0;
};

/// Propagates inbody probability one frame along the velocity field.
/// Missing neighbours at the border are dropped and the remaining weights
/// renormalized.
BeliefGrid predict(const BeliefGrid & grid, const VelocityField & velocity);

/// exp(beta r) with r the Pearson correlation of the two windows (0 when
/// either has zero variance).
double correlation_likelihood(std::span<const double> cell_window, std::span<const double> motion_window, double beta);

/// Adds log L per cell, L from the trailing window of frames and self-motion.
BeliefGrid update(
  const BeliefGrid & grid, std::span<const SaliencyFrame> frames, std::span<const double> motion, double beta);

/// Match scores of `curr` against `prev` shifted one cell per direction; the
/// excess over the unshifted score, relative to its headroom 1 - m_stay,
/// is the instantaneous velocity. Blended into `field` with rate `rho`.
VelocityField learn_velocities(
  const SaliencyFrame & prev, const SaliencyFrame & curr, const VelocityField & field, double rho);

/// Inbody iff P >= threshold.
Mask classify(const BeliefGrid & grid, double threshold);

struct GridParams
{
  Eigen::Index width = 64;
  Eigen::Index height = 48;
  int decimation = 10;
  std::size_t window = 15;
  double beta = 2.0;
  double ema_rate = 0.2;
  double threshold = 0.5;
  double prior = 0.5;
  VelocityMode velocity_mode = VelocityMode::global;

  void validate() const;
};

/// Single-writer filter state: belief, velocities, and the trailing window.
class SelfDetector
{
public:
  explicit SelfDetector(const GridParams & params);

  /// learn_velocities (from the second frame), predict, then update once
  /// the window is full.
  void push(const SaliencyFrame & frame, double self_motion);

  const BeliefGrid & grid() const { return grid_; }
  const VelocityField & velocity() const { return velocity_; }
  std::size_t frames_seen() const { return seen_; }

private:
  GridParams params_;
  BeliefGrid grid_;
  VelocityField velocity_;
  std::vector<SaliencyFrame> frames_;
  std::vector<double> motion_;
  std::size_t seen_ = 0;
};

struct SequenceResult
{
  BeliefGrid grid;
  VelocityField velocity;
  Mask mask;
};

using FrameCallback = std::function<void(std::size_t frame, const BeliefGrid &)>;

SequenceResult run_sequence(
  std::span<const SaliencyFrame> frames, std::span<const double> motion, const GridParams & params,
  const FrameCallback & on_frame = {});

// -- Synthetic contingency scene -------------------------------------------

struct SceneParams
{
  std::size_t frames = 200;
  Eigen::Vector3d arm_pose{0.6, -0.9, 0.7};  // rad, rasterized as the inbody region
  int arm_radius = 1;                        // cells of dilation around the links
  Eigen::Index distractor_row = 4;
  Eigen::Index distractor_col = 48;
  Eigen::Index distractor_height = 8;
  Eigen::Index distractor_width = 10;
  double switch_probability = 0.15;  // per frame, for both burst processes
  double background_level = 0.01;  // baseline raw activity of every cell
  double background_noise = 0.005;  // width of the uniform per-cell jitter
  double normalization = 25.0;     // weight of mean raw activity in the divisor
  double semi_saturation = 0.0667;
  bool zero_motion = false;

  void validate(const GridParams & grid) const;
};

/// Labelled saliency sequence. Self-motion is the joint-speed norm of a
/// bursty motor-babbling signal; the arm region's raw activity follows it.
/// A distractor pulses with its own independent burst process. Saliency is
/// divisively normalized by total raw activity, so strongly active regions
/// suppress the rest of the field.
struct SyntheticScene
{
  std::vector<SaliencyFrame> frames;
  std::vector<double> motion;
  Mask inbody;
  Mask distractor;
};

SyntheticScene make_contingency_scene(
  const GridParams & grid, const SceneParams & scene, const ArmConfig & arm, std::uint64_t seed);

}  // namespace corporea

#endif  // CORPOREA__SELF_GRID_HPP_
