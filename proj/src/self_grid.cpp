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

#include "corporea/self_grid.hpp"

#include "corporea/errors.hpp"
#include "corporea/rng.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace corporea
{

double log_odds(double p) { return std::log(p / (1.0 - p)); }

double probability(double l) { return 1.0 / (1.0 + std::exp(-l)); }

double clamp_log_odds(double l) { return std::clamp(l, kLogOddsMin, kLogOddsMax); }

BeliefGrid BeliefGrid::uniform(Eigen::Index rows, Eigen::Index cols, int decimation, double prior)
{
  if (rows < 1 || cols < 1) {
    throw DomainError(fmt::format("grid must have positive size, got {}x{}", rows, cols));
  }
  if (!(prior > 0.0 && prior < 1.0)) {
    throw DomainError(fmt::format("grid prior must lie in (0, 1), got {}", prior));
  }
  return BeliefGrid{Eigen::MatrixXd::Constant(rows, cols, clamp_log_odds(corporea::log_odds(prior))), decimation};
}

Eigen::MatrixXd BeliefGrid::probabilities() const { return log_odds.unaryExpr(&probability); }

std::array<int, 2> offset_of(Direction d)
{
  switch (d) {
    case Direction::up:
      return {-1, 0};
    case Direction::down:
      return {1, 0};
    case Direction::left:
      return {0, -1};
    case Direction::right:
      return {0, 1};
  }
  return {0, 0};
}

VelocityField VelocityField::global(double up, double down, double left, double right)
{
  VelocityField f;
  f.v[0](0, 0) = up;
  f.v[1](0, 0) = down;
  f.v[2](0, 0) = left;
  f.v[3](0, 0) = right;
  for (const auto & m : f.v) {
    if (!(m(0, 0) >= 0.0)) {
      throw DomainError("velocities must be non-negative");
    }
  }
  return f;
}

VelocityField VelocityField::per_cell(Eigen::Index rows, Eigen::Index cols)
{
  VelocityField f;
  f.mode = VelocityMode::per_cell;
  for (auto & m : f.v) {
    m = Eigen::MatrixXd::Zero(rows, cols);
  }
  return f;
}

double VelocityField::at(Direction d, Eigen::Index row, Eigen::Index col) const
{
  const auto & m = v[static_cast<std::size_t>(d)];
  return mode == VelocityMode::global ? m(0, 0) : m(row, col);
}

std::array<double, 5> VelocityField::transition_weights(Eigen::Index row, Eigen::Index col) const
{
  std::array<double, 5> w{};
  double moving = 0.0;
  for (Direction d : kDirections) {
    w[1 + static_cast<std::size_t>(d)] = at(d, row, col);
    moving += at(d, row, col);
  }
  w[0] = std::max(0.0, 1.0 - moving);
  const double total = w[0] + moving;
  for (double & x : w) {
    x /= total;
  }
  return w;
}

BeliefGrid predict(const BeliefGrid & grid, const VelocityField & velocity)
{
  const Eigen::MatrixXd p = grid.probabilities();
  const Eigen::Index rows = grid.rows();
  const Eigen::Index cols = grid.cols();
  BeliefGrid next = grid;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto w = velocity.transition_weights(r, c);
      if (w[0] >= 1.0) {
        continue;  // no inflow: keep the belief exactly
      }
      double num = w[0] * p(r, c);
      double den = w[0];
      for (Direction d : kDirections) {
        // Content moving in direction d arrives from the opposite neighbour.
        const auto [dr, dc] = offset_of(d);
        const Eigen::Index sr = r - dr;
        const Eigen::Index sc = c - dc;
        if (sr < 0 || sr >= rows || sc < 0 || sc >= cols) {
          continue;
        }
        const double wd = w[1 + static_cast<std::size_t>(d)];
        num += wd * p(sr, sc);
        den += wd;
      }
      if (den > 0.0) {
        next.log_odds(r, c) = clamp_log_odds(log_odds(num / den));
      }
    }
  }
  return next;
}

namespace
{

/// Streaming Pearson correlation; zero when either side has no variance.
class Pearson
{
public:
  void add(double x, double y)
  {
    ++n_;
    sx_ += x;
    sy_ += y;
    sxx_ += x * x;
    syy_ += y * y;
    sxy_ += x * y;
  }

  double value() const
  {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double vx = sxx_ - sx_ * sx_ / n;
    const double vy = syy_ - sy_ * sy_ / n;
    const double scale = std::max({1.0, sxx_, syy_});
    if (vx <= 1e-12 * scale || vy <= 1e-12 * scale) return 0.0;
    return std::clamp((sxy_ - sx_ * sy_ / n) / std::sqrt(vx * vy), -1.0, 1.0);
  }

private:
  std::size_t n_ = 0;
  double sx_ = 0.0, sy_ = 0.0, sxx_ = 0.0, syy_ = 0.0, sxy_ = 0.0;
};

/// Two-pass correlation of equal-length windows, used where exactness
/// against a hand oracle matters.
double pearson(std::span<const double> x, std::span<const double> y)
{
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 1e-24 * n || syy <= 1e-24 * n) {
    return 0.0;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double correlation_likelihood(std::span<const double> cell_window, std::span<const double> motion_window, double beta)
{
  if (cell_window.size() != motion_window.size()) {
    throw DomainError(fmt::format(
      "correlation windows differ in length: {} vs {}", cell_window.size(), motion_window.size()));
  }
  if (cell_window.size() < 2) {
    throw DomainError("correlation window must hold at least 2 frames");
  }
  if (!(beta > 0.0)) {
    throw DomainError(fmt::format("beta must be positive, got {}", beta));
  }
  const double r = pearson(cell_window, motion_window);
  return std::clamp(std::exp(beta * r), std::exp(-beta), std::exp(beta));
}

BeliefGrid update(
  const BeliefGrid & grid, std::span<const SaliencyFrame> frames, std::span<const double> motion, double beta)
{
  if (frames.size() != motion.size()) {
    throw DomainError(fmt::format("update: {} frames but {} motion samples", frames.size(), motion.size()));
  }
  for (const auto & f : frames) {
    if (f.activation.rows() != grid.rows() || f.activation.cols() != grid.cols()) {
      throw DomainError("update: frame shape does not match the grid");
    }
  }
  BeliefGrid next = grid;
  std::vector<double> cell(frames.size());
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      for (std::size_t t = 0; t < frames.size(); ++t) {
        cell[t] = frames[t].activation(r, c);
      }
      const double l = correlation_likelihood(cell, motion, beta);
      next.log_odds(r, c) = clamp_log_odds(grid.log_odds(r, c) + std::log(l));
    }
  }
  return next;
}

namespace
{

/// Correlation of curr(r, c) with prev(r - dr, c - dc) over cells of the
/// region [r0, r1) x [c0, c1) where both exist.
double shifted_match(
  const Eigen::MatrixXd & prev, const Eigen::MatrixXd & curr, int dr, int dc, Eigen::Index r0, Eigen::Index r1,
  Eigen::Index c0, Eigen::Index c1)
{
  Pearson acc;
  for (Eigen::Index c = c0; c < c1; ++c) {
    for (Eigen::Index r = r0; r < r1; ++r) {
      const Eigen::Index sr = r - dr;
      const Eigen::Index sc = c - dc;
      if (sr < 0 || sr >= prev.rows() || sc < 0 || sc >= prev.cols()) {
        continue;
      }
      acc.add(curr(r, c), prev(sr, sc));
    }
  }
  return acc.value();
}

std::array<double, 4> instantaneous_velocity(
  const Eigen::MatrixXd & prev, const Eigen::MatrixXd & curr, Eigen::Index r0, Eigen::Index r1, Eigen::Index c0,
  Eigen::Index c1)
{
  std::array<double, 4> v{};
  const double stay = shifted_match(prev, curr, 0, 0, r0, r1, c0, c1);
  if (stay >= 1.0) {
    return v;
  }
  double total = 0.0;
  for (Direction d : kDirections) {
    const auto [dr, dc] = offset_of(d);
    const double m = shifted_match(prev, curr, dr, dc, r0, r1, c0, c1);
    const double excess = std::max(0.0, m - stay) / (1.0 - stay);
    v[static_cast<std::size_t>(d)] = excess;
    total += excess;
  }
  if (total > 1.0) {
    for (double & x : v) x /= total;
  }
  return v;
}

}  // namespace

VelocityField learn_velocities(
  const SaliencyFrame & prev, const SaliencyFrame & curr, const VelocityField & field, double rho)
{
  if (prev.activation.rows() != curr.activation.rows() || prev.activation.cols() != curr.activation.cols()) {
    throw DomainError("learn_velocities: frames differ in shape");
  }
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw DomainError(fmt::format("EMA rate must lie in (0, 1], got {}", rho));
  }
  const Eigen::MatrixXd & a = prev.activation;
  const Eigen::MatrixXd & b = curr.activation;
  VelocityField next = field;
  if (field.mode == VelocityMode::global) {
    const auto v = instantaneous_velocity(a, b, 0, b.rows(), 0, b.cols());
    for (std::size_t d = 0; d < 4; ++d) {
      next.v[d](0, 0) = (1.0 - rho) * field.v[d](0, 0) + rho * v[d];
    }
    return next;
  }
  if (field.v[0].rows() != b.rows() || field.v[0].cols() != b.cols()) {
    throw DomainError("learn_velocities: per-cell field shape does not match the frames");
  }
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index r = 0; r < b.rows(); ++r) {
      const auto v = instantaneous_velocity(
        a, b, std::max<Eigen::Index>(0, r - 1), std::min(b.rows(), r + 2), std::max<Eigen::Index>(0, c - 1),
        std::min(b.cols(), c + 2));
      for (std::size_t d = 0; d < 4; ++d) {
        next.v[d](r, c) = (1.0 - rho) * field.v[d](r, c) + rho * v[d];
      }
    }
  }
  return next;
}

Mask classify(const BeliefGrid & grid, double threshold)
{
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError(fmt::format("classification threshold must lie in (0, 1), got {}", threshold));
  }
  return grid.probabilities().array() >= threshold;
}

void GridParams::validate() const
{
  if (width < 1 || height < 1) {
    throw DomainError(fmt::format("grid size must be positive, got {}x{}", width, height));
  }
  if (decimation < 1) {
    throw DomainError(fmt::format("decimation must be positive, got {}", decimation));
  }
  if (window < 2) {
    throw DomainError(fmt::format("window must be at least 2 frames, got {}", window));
  }
  if (!(beta > 0.0)) {
    throw DomainError(fmt::format("beta must be positive, got {}", beta));
  }
  if (!(ema_rate > 0.0 && ema_rate <= 1.0)) {
    throw DomainError(fmt::format("EMA rate must lie in (0, 1], got {}", ema_rate));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError(fmt::format("threshold must lie in (0, 1), got {}", threshold));
  }
  if (!(prior > 0.0 && prior < 1.0)) {
    throw DomainError(fmt::format("prior must lie in (0, 1), got {}", prior));
  }
}

SelfDetector::SelfDetector(const GridParams & params)
: params_(params),
  grid_(BeliefGrid::uniform(params.height, params.width, params.decimation, params.prior)),
  velocity_(
    params.velocity_mode == VelocityMode::global ? VelocityField::global()
                                                 : VelocityField::per_cell(params.height, params.width))
{
  params_.validate();
}

void SelfDetector::push(const SaliencyFrame & frame, double self_motion)
{
  if (frame.activation.rows() != grid_.rows() || frame.activation.cols() != grid_.cols()) {
    throw DomainError(fmt::format(
      "frame {} has shape {}x{}, grid is {}x{}", frame.index, frame.activation.rows(), frame.activation.cols(),
      grid_.rows(), grid_.cols()));
  }
  if (!(self_motion >= 0.0)) {
    throw DomainError(fmt::format("self-motion must be non-negative, got {}", self_motion));
  }
  if (seen_ > 0) {
    velocity_ = learn_velocities(frames_.back(), frame, velocity_, params_.ema_rate);
  }
  grid_ = predict(grid_, velocity_);
  frames_.push_back(frame);
  motion_.push_back(self_motion);
  if (frames_.size() > params_.window) {
    frames_.erase(frames_.begin());
    motion_.erase(motion_.begin());
  }
  if (frames_.size() == params_.window) {
    grid_ = update(grid_, frames_, motion_, params_.beta);
  }
  ++seen_;
}

SequenceResult run_sequence(
  std::span<const SaliencyFrame> frames, std::span<const double> motion, const GridParams & params,
  const FrameCallback & on_frame)
{
  if (frames.size() != motion.size()) {
    throw DomainError(fmt::format(
      "run_sequence: {} frames but {} self-motion samples", frames.size(), motion.size()));
  }
  SelfDetector detector(params);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    detector.push(frames[t], motion[t]);
    if (on_frame) {
      on_frame(t, detector.grid());
    }
  }
  return {detector.grid(), detector.velocity(), classify(detector.grid(), params.threshold)};
}

void SceneParams::validate(const GridParams & grid) const
{
  if (frames < 1) {
    throw DomainError("scene must have at least one frame");
  }
  if (arm_radius < 0) {
    throw DomainError("arm_radius must be non-negative");
  }
  if (distractor_row < 0 || distractor_col < 0 || distractor_height < 1 || distractor_width < 1 ||
      distractor_row + distractor_height > grid.height || distractor_col + distractor_width > grid.width) {
    throw DomainError("distractor rectangle must lie inside the grid");
  }
  if (!(switch_probability > 0.0 && switch_probability <= 1.0)) {
    throw DomainError("switch_probability must lie in (0, 1]");
  }
  if (!(background_level >= 0.0) || !(background_noise >= 0.0) || !(normalization >= 0.0) || !(semi_saturation > 0.0)) {
    throw DomainError("scene noise and normalization parameters out of range");
  }
}

namespace
{

Mask rasterize_arm(const GridParams & grid, const SceneParams & scene, const ArmConfig & arm)
{
  Mask mask = Mask::Constant(grid.height, grid.width, false);
  const ArmPoints points = chain_positions(scene.arm_pose, arm.link_lengths);
  const double k = static_cast<double>(grid.decimation);
  for (std::size_t link = 0; link + 1 < points.size(); ++link) {
    const Eigen::Vector2d a = points[link];
    const Eigen::Vector2d b = points[link + 1];
    const double length_px = (b - a).norm() * arm.camera.scale;
    const int samples = std::max(2, static_cast<int>(std::ceil(length_px)) + 1);
    for (int s = 0; s < samples; ++s) {
      const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(s) / (samples - 1));
      const double u = arm.camera.center.x() + arm.camera.scale * p.x();
      const double v = arm.camera.center.y() - arm.camera.scale * p.y();
      const auto row = static_cast<Eigen::Index>(std::floor(v / k));
      const auto col = static_cast<Eigen::Index>(std::floor(u / k));
      for (Eigen::Index r = row - scene.arm_radius; r <= row + scene.arm_radius; ++r) {
        for (Eigen::Index c = col - scene.arm_radius; c <= col + scene.arm_radius; ++c) {
          if (r >= 0 && r < grid.height && c >= 0 && c < grid.width) {
            mask(r, c) = true;
          }
        }
      }
    }
  }
  return mask;
}

/// Two-state on/off process; while on, each frame draws an amplitude in [0.5, 1].
std::vector<double> burst_process(std::size_t frames, double switch_probability, Rng & rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out(frames);
  bool on = false;
  for (double & x : out) {
    if (unit(rng) < switch_probability) {
      on = !on;
    }
    const double amplitude = 0.5 + 0.5 * unit(rng);
    x = on ? amplitude : 0.0;
  }
  return out;
}

}  // namespace

SyntheticScene make_contingency_scene(
  const GridParams & grid, const SceneParams & scene, const ArmConfig & arm, std::uint64_t seed)
{
  grid.validate();
  scene.validate(grid);
  Rng motor_rng = make_rng(seed, Stream::selfdetect);
  Rng distractor_rng = make_rng(seed, Stream::distractor);
  Rng pixel_rng(derive_seed(seed, 100));

  SyntheticScene out;
  out.inbody = rasterize_arm(grid, scene, arm);
  out.distractor = Mask::Constant(grid.height, grid.width, false);
  out.distractor
    .block(scene.distractor_row, scene.distractor_col, scene.distractor_height, scene.distractor_width)
    .setConstant(true);
  out.inbody = out.inbody && !out.distractor;

  // Joint-speed norm of the babbling: a burst amplitude along a random unit direction.
  const std::vector<double> speed = burst_process(scene.frames, scene.switch_probability, motor_rng);
  const std::vector<double> other = burst_process(scene.frames, scene.switch_probability, distractor_rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.motion.resize(scene.frames);
  for (std::size_t t = 0; t < scene.frames; ++t) {
    Eigen::Vector3d dir(gauss(motor_rng), gauss(motor_rng), gauss(motor_rng));
    dir.normalize();
    out.motion[t] = scene.zero_motion ? 0.0 : (speed[t] * dir).norm();
  }

  std::uniform_real_distribution<double> noise(0.0, scene.background_noise);
  out.frames.resize(scene.frames);
  for (std::size_t t = 0; t < scene.frames; ++t) {
    Eigen::MatrixXd raw(grid.height, grid.width);
    for (Eigen::Index c = 0; c < grid.width; ++c) {
      for (Eigen::Index r = 0; r < grid.height; ++r) {
        raw(r, c) = scene.background_level + noise(pixel_rng);
      }
    }
    raw = (out.inbody.cast<double>() * std::min(1.0, out.motion[t]) + raw.array()).matrix();
    raw = (out.distractor.cast<double>() * other[t] + raw.array()).matrix();
    const double divisor = scene.semi_saturation + scene.normalization * raw.mean();
    out.frames[t].activation = (raw.array() / divisor).min(1.0).max(0.0).matrix();
    out.frames[t].index = static_cast<std::int64_t>(t);
  }
  return out;
}

}  // namespace corporea
