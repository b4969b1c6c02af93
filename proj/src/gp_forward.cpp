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

#include "corporea/gp_forward.hpp"

#include "corporea/errors.hpp"

#include <Eigen/Cholesky>
#include <fmt/core.h>

#include <cmath>
#include <numbers>

namespace corporea
{

namespace
{

constexpr std::array<double, 8> kJitterLadder{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void KernelParams::validate() const
{
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw DomainError(fmt::format("lengthscale must be positive, got {}", lengthscale));
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw DomainError(fmt::format("signal_variance must be positive, got {}", signal_variance));
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw DomainError(fmt::format("noise_variance must be non-negative, got {}", noise_variance));
  }
}

double se_kernel(const Eigen::Ref<const Eigen::VectorXd> & a, const Eigen::Ref<const Eigen::VectorXd> & b,
                 const KernelParams & params)
{
  const double l2 = params.lengthscale * params.lengthscale;
  return params.signal_variance * std::exp(-(a - b).squaredNorm() / (2.0 * l2));
}

GPModel GPModel::fit(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs, const KernelParams & params)
{
  params.validate();
  const Eigen::Index n = inputs.rows();
  if (n < 1) {
    throw DomainError("GPModel::fit: need at least one training row");
  }
  if (outputs.rows() != n) {
    throw DomainError(fmt::format(
      "GPModel::fit: {} input rows but {} output rows", n, outputs.rows()));
  }
  if (!inputs.allFinite() || !outputs.allFinite()) {
    throw DomainError("GPModel::fit: training data contains non-finite values");
  }

  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = params.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double k = se_kernel(inputs.row(i).transpose(), inputs.row(j).transpose(), params);
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }

  GPModel model;
  bool factored = false;
  for (double jitter : kJitterLadder) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += params.noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      model.chol_ = llt.matrixL();
      model.jitter_ = jitter;
      factored = true;
      break;
    }
  }
  if (!factored) {
    throw NumericalError(fmt::format(
      "GPModel::fit: Gram matrix not positive definite after jitter {}", kJitterLadder.back()));
  }

  model.alpha_ = model.chol_.transpose().triangularView<Eigen::Upper>().solve(
    model.chol_.triangularView<Eigen::Lower>().solve(outputs));
  model.inputs_ = std::move(inputs);
  model.outputs_ = std::move(outputs);
  model.params_ = params;
  return model;
}

Eigen::VectorXd GPModel::kernel_vector(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  if (mu.size() != inputs_.cols()) {
    throw DomainError(fmt::format("GP query has dimension {}, model expects {}", mu.size(), inputs_.cols()));
  }
  const double inv = 1.0 / (2.0 * params_.lengthscale * params_.lengthscale);
  const Eigen::VectorXd sq = (inputs_.rowwise() - mu.transpose()).rowwise().squaredNorm();
  return params_.signal_variance * (-inv * sq.array()).exp().matrix();
}

Eigen::VectorXd GPModel::predict_mean(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  return alpha_.transpose() * kernel_vector(mu);
}

Eigen::VectorXd GPModel::predict_variance(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  const Eigen::VectorXd k = kernel_vector(mu);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
  const double var = std::max(0.0, params_.signal_variance - v.squaredNorm());
  return Eigen::VectorXd::Constant(outputs_.cols(), var);
}

Eigen::MatrixXd GPModel::predict_gradient(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  // dk_i/dmu = (x_i - mu) / l^2 * k_i
  const Eigen::VectorXd k = kernel_vector(mu);
  const Eigen::MatrixXd diff = (-inputs_).rowwise() + mu.transpose();
  const Eigen::VectorXd w = -k / (params_.lengthscale * params_.lengthscale);
  return alpha_.transpose() * (w.asDiagonal() * diff);
}

double GPModel::log_marginal_likelihood() const
{
  const double n = static_cast<double>(inputs_.rows());
  const double m = static_cast<double>(outputs_.cols());
  const double fit_term = -0.5 * (outputs_.array() * alpha_.array()).sum();
  const double log_det_half = chol_.diagonal().array().log().sum();
  return fit_term - m * log_det_half - 0.5 * n * m * std::log(2.0 * std::numbers::pi);
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count)
{
  if (!(lo > 0.0 && hi >= lo) || count == 0) {
    throw DomainError("log_spaced: need 0 < lo <= hi and count >= 1");
  }
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo);
  const double step = (std::log(hi) - a) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + step * static_cast<double>(i));
  }
  out.back() = hi;
  return out;
}

KernelParams select_lengthscale(
  const Eigen::MatrixXd & inputs, const Eigen::MatrixXd & outputs, const KernelParams & base,
  std::span<const double> candidates)
{
  KernelParams best = base;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double l : candidates) {
    KernelParams p = base;
    p.lengthscale = l;
    const double lml = GPModel::fit(inputs, outputs, p).log_marginal_likelihood();
    if (lml > best_lml) {
      best_lml = lml;
      best = p;
    }
  }
  return best;
}

std::string_view to_string(Modality m)
{
  switch (m) {
    case Modality::proprio:
      return "proprio";
    case Modality::visual:
      return "visual";
    case Modality::tactile:
      return "tactile";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name)
{
  if (name == "proprio") return Modality::proprio;
  if (name == "visual" || name == "visual_self") return Modality::visual;
  if (name == "tactile") return Modality::tactile;
  throw DomainError(fmt::format("unknown modality '{}'", name));
}

IdentityModel::IdentityModel(Eigen::Index dim, double noise_variance)
: dim_(dim), noise_variance_(noise_variance)
{
  if (dim < 1) {
    throw DomainError("IdentityModel: dimension must be positive");
  }
  if (!(noise_variance > 0.0)) {
    throw DomainError("IdentityModel: noise variance must be positive");
  }
}

Eigen::VectorXd IdentityModel::predict(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  return mu;
}

Eigen::MatrixXd IdentityModel::jacobian(const Eigen::Ref<const Eigen::VectorXd> &) const
{
  return Eigen::MatrixXd::Identity(dim_, dim_);
}

Standardization Standardization::from_data(const Eigen::MatrixXd & y)
{
  Standardization s;
  const double n = static_cast<double>(y.rows());
  s.mean = y.colwise().mean();
  s.scale = ((y.rowwise() - s.mean).array().square().colwise().sum() / n).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale[j] > 1e-12)) {
      s.scale[j] = 1.0;
    }
  }
  return s;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd & y) const
{
  return (y.rowwise() - mean).array().rowwise() / scale.array();
}

namespace
{

Eigen::MatrixXd encode_targets(const Eigen::MatrixXd & raw, OutputTransform transform)
{
  if (transform == OutputTransform::identity) {
    return raw;
  }
  return (kContactLogit * (2.0 * raw.array() - 1.0)).matrix();
}

}  // namespace

GpSensoryModel GpSensoryModel::fit(
  const Eigen::MatrixXd & inputs, const Eigen::MatrixXd & targets, const KernelParams & params,
  OutputTransform transform, std::span<const double> lengthscale_grid)
{
  if (inputs.rows() != targets.rows()) {
    throw DomainError(fmt::format(
      "GpSensoryModel::fit: {} input rows but {} target rows", inputs.rows(), targets.rows()));
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    if (targets.row(i).allFinite()) {
      keep.push_back(i);
    }
  }
  if (keep.empty()) {
    throw DomainError("GpSensoryModel::fit: no complete target rows");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(keep.size()), inputs.cols());
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(keep.size()), targets.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = inputs.row(keep[r]);
    raw.row(static_cast<Eigen::Index>(r)) = targets.row(keep[r]);
  }
  if (transform == OutputTransform::logistic && ((raw.array() < 0.0) || (raw.array() > 1.0)).any()) {
    throw DomainError("GpSensoryModel::fit: contact targets must lie in [0, 1]");
  }

  const Eigen::MatrixXd encoded = encode_targets(raw, transform);
  Standardization s = Standardization::from_data(encoded);
  const Eigen::MatrixXd z = s.apply(encoded);
  const KernelParams chosen =
    lengthscale_grid.empty() ? params : select_lengthscale(x, z, params, lengthscale_grid);
  GPModel gp = GPModel::fit(std::move(x), z, chosen);
  return GpSensoryModel(std::move(gp), std::move(s), transform, std::move(raw));
}

GpSensoryModel GpSensoryModel::restore(
  Eigen::MatrixXd inputs, Eigen::MatrixXd raw_targets, const KernelParams & params,
  Standardization standardization, OutputTransform transform)
{
  if (standardization.mean.size() != raw_targets.cols() || standardization.scale.size() != raw_targets.cols()) {
    throw DomainError("GpSensoryModel::restore: standardization width does not match targets");
  }
  const Eigen::MatrixXd z = standardization.apply(encode_targets(raw_targets, transform));
  GPModel gp = GPModel::fit(std::move(inputs), z, params);
  return GpSensoryModel(std::move(gp), std::move(standardization), transform, std::move(raw_targets));
}

Eigen::VectorXd GpSensoryModel::predict(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  Eigen::VectorXd m = gp_.predict_mean(mu).cwiseProduct(standardization_.scale.transpose()) +
                      standardization_.mean.transpose();
  if (transform_ == OutputTransform::logistic) {
    m = m.unaryExpr(&sigmoid);
  }
  return m;
}

Eigen::MatrixXd GpSensoryModel::jacobian(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  Eigen::MatrixXd j = standardization_.scale.transpose().asDiagonal() * gp_.predict_gradient(mu);
  if (transform_ == OutputTransform::logistic) {
    const Eigen::VectorXd m = gp_.predict_mean(mu).cwiseProduct(standardization_.scale.transpose()) +
                              standardization_.mean.transpose();
    const Eigen::VectorXd s = m.unaryExpr(&sigmoid);
    j = (s.array() * (1.0 - s.array())).matrix().asDiagonal() * j;
  }
  return j;
}

double GpSensoryModel::predictive_variance(const Eigen::Ref<const Eigen::VectorXd> & mu) const
{
  const double latent = gp_.predict_variance(mu)[0];
  const double scale2 = standardization_.scale.array().square().mean();
  if (transform_ == OutputTransform::identity) {
    return latent * scale2;
  }
  // Delta method through the squashing function.
  const Eigen::VectorXd p = predict(mu);
  const double slope2 = (p.array() * (1.0 - p.array())).square().mean();
  return latent * scale2 * slope2;
}

double GpSensoryModel::noise_variance() const
{
  const double raw = gp_.params().noise_variance * standardization_.scale.array().square().mean();
  // Logistic slope at p = 1/2 is 1/4.
  return transform_ == OutputTransform::identity ? raw : raw / 16.0;
}

void ForwardModelSet::set(Modality m, std::shared_ptr<const SensoryModel> model)
{
  if (model) {
    for (Modality other : kAllModalities) {
      if (other != m && has(other) && at(other).input_dim() != model->input_dim()) {
        throw DomainError(fmt::format(
          "model for {} has input dimension {}, expected {}", to_string(m), model->input_dim(),
          at(other).input_dim()));
      }
    }
  }
  models_[static_cast<std::size_t>(m)] = std::move(model);
}

const SensoryModel & ForwardModelSet::at(Modality m) const
{
  const auto & ptr = models_[static_cast<std::size_t>(m)];
  if (!ptr) {
    throw DomainError(fmt::format("no forward model for modality {}", to_string(m)));
  }
  return *ptr;
}

Eigen::Index ForwardModelSet::latent_dim() const
{
  for (const auto & ptr : models_) {
    if (ptr) return ptr->input_dim();
  }
  throw DomainError("forward model set is empty");
}

}  // namespace corporea
