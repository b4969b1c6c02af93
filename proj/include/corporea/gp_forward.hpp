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

#ifndef CORPOREA__GP_FORWARD_HPP_
#define CORPOREA__GP_FORWARD_HPP_

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace corporea
{

/// Isotropic squared-exponential kernel hyperparameters.
struct KernelParams
{
  double lengthscale = 0.5;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;

  void validate() const;
};

double se_kernel(const Eigen::Ref<const Eigen::VectorXd> & a, const Eigen::Ref<const Eigen::VectorXd> & b,
                 const KernelParams & params);

/// Zero-mean GP regressor with independent outputs sharing one kernel.
///
/// Fitting factorizes K(X,X) + (noise_variance + jitter) I once. The jitter
/// starts at zero and escalates 1e-10, 1e-9, ... 1e-4 if the factorization
/// is not positive definite. Immutable after fit, so concurrent predictions
/// are safe.
class GPModel
{
public:
  static GPModel fit(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs, const KernelParams & params);

  Eigen::VectorXd predict_mean(const Eigen::Ref<const Eigen::VectorXd> & mu) const;

  /// Predictive variance of the latent function, one entry per output
  /// dimension (identical, since the kernel is shared). Clamped at zero.
  Eigen::VectorXd predict_variance(const Eigen::Ref<const Eigen::VectorXd> & mu) const;

  /// m x d Jacobian of predict_mean.
  Eigen::MatrixXd predict_gradient(const Eigen::Ref<const Eigen::VectorXd> & mu) const;

  double log_marginal_likelihood() const;

  const Eigen::MatrixXd & inputs() const { return inputs_; }
  const Eigen::MatrixXd & outputs() const { return outputs_; }
  const KernelParams & params() const { return params_; }
  const Eigen::MatrixXd & cholesky() const { return chol_; }
  const Eigen::MatrixXd & alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  Eigen::Index input_dim() const { return inputs_.cols(); }
  Eigen::Index output_dim() const { return outputs_.cols(); }

private:
  GPModel() = default;
  Eigen::VectorXd kernel_vector(const Eigen::Ref<const Eigen::VectorXd> & mu) const;

  Eigen::MatrixXd inputs_;
  Eigen::MatrixXd outputs_;
  KernelParams params_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd alpha_;
  double jitter_ = 0.0;
};

/// Log-spaced values from lo to hi inclusive.
std::vector<double> log_spaced(double lo, double hi, std::size_t count);

/// Fits once per candidate lengthscale and keeps the one with the highest
/// log marginal likelihood. Ties keep the earlier candidate.
KernelParams select_lengthscale(
  const Eigen::MatrixXd & inputs, const Eigen::MatrixXd & outputs, const KernelParams & base,
  std::span<const double> candidates);

enum class Modality : std::size_t { proprio = 0, visual = 1, tactile = 2 };
inline constexpr std::size_t kModalityCount = 3;
inline constexpr std::array<Modality, kModalityCount> kAllModalities{
  Modality::proprio, Modality::visual, Modality::tactile};

std::string_view to_string(Modality m);
/// Accepts "proprio", "visual" (or "visual_self") and "tactile".
Modality parse_modality(std::string_view name);

/// Forward sensory map g: latent body state -> expected reading, in the
/// modality's raw units.
class SensoryModel
{
public:
  virtual ~SensoryModel() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd> & mu) const = 0;
  virtual Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd> & mu) const = 0;
  /// Mean predictive variance across output dimensions, raw units.
  virtual double predictive_variance(const Eigen::Ref<const Eigen::VectorXd> & mu) const = 0;
  /// Sensor noise variance in raw units.
  virtual double noise_variance() const = 0;
};

/// g(mu) = mu. Proprioception reads the joint angles directly.
class IdentityModel final : public SensoryModel
{
public:
  IdentityModel(Eigen::Index dim, double noise_variance);
  Eigen::Index input_dim() const override { return dim_; }
  Eigen::Index output_dim() const override { return dim_; }
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd> & mu) const override;
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd> & mu) const override;
  double predictive_variance(const Eigen::Ref<const Eigen::VectorXd> &) const override { return 0.0; }
  double noise_variance() const override { return noise_variance_; }

private:
  Eigen::Index dim_;
  double noise_variance_;
};

enum class OutputTransform { identity, logistic };

/// Per-column affine map between raw sensor units and the unit-scale space
/// the GP is fitted in.
struct Standardization
{
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardization from_data(const Eigen::MatrixXd & y);
  Eigen::MatrixXd apply(const Eigen::MatrixXd & y) const;
};

/// Binary contact targets are fitted in logit space at +/- this value.
inline constexpr double kContactLogit = 8.0;

/// GP-backed sensory model. Targets are standardized per column before
/// fitting; with the logistic transform, {0,1} contact targets are first
/// mapped to -/+kContactLogit and predictions are squashed back into [0,1].
class GpSensoryModel final : public SensoryModel
{
public:
  /// `targets` are raw sensor readings. Rows containing NaN are dropped.
  static GpSensoryModel fit(
    const Eigen::MatrixXd & inputs, const Eigen::MatrixXd & targets, const KernelParams & params,
    OutputTransform transform, std::span<const double> lengthscale_grid = {});

  Eigen::Index input_dim() const override { return gp_.input_dim(); }
  Eigen::Index output_dim() const override { return gp_.output_dim(); }
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd> & mu) const override;
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd> & mu) const override;
  double predictive_variance(const Eigen::Ref<const Eigen::VectorXd> & mu) const override;
  double noise_variance() const override;

  const GPModel & gp() const { return gp_; }
  const Standardization & standardization() const { return standardization_; }
  OutputTransform transform() const { return transform_; }
  /// Raw targets the model was fitted on (after NaN-row removal).
  const Eigen::MatrixXd & raw_targets() const { return raw_targets_; }

  /// Rebuilds a model from persisted parts; the factorization is recomputed.
  static GpSensoryModel restore(
    Eigen::MatrixXd inputs, Eigen::MatrixXd raw_targets, const KernelParams & params,
    Standardization standardization, OutputTransform transform);

private:
  GpSensoryModel(GPModel gp, Standardization s, OutputTransform t, Eigen::MatrixXd raw)
  : gp_(std::move(gp)), standardization_(std::move(s)), transform_(t), raw_targets_(std::move(raw))
  {
  }

  GPModel gp_;
  Standardization standardization_;
  OutputTransform transform_;
  Eigen::MatrixXd raw_targets_;
};

/// One forward model per modality; all share the latent dimension.
class ForwardModelSet
{
public:
  void set(Modality m, std::shared_ptr<const SensoryModel> model);
  bool has(Modality m) const { return models_[static_cast<std::size_t>(m)] != nullptr; }
  /// Throws DomainError when the modality has no model.
  const SensoryModel & at(Modality m) const;
  std::shared_ptr<const SensoryModel> shared(Modality m) const { return models_[static_cast<std::size_t>(m)]; }
  Eigen::Index latent_dim() const;

private:
  std::array<std::shared_ptr<const SensoryModel>, kModalityCount> models_{};
};

}  // namespace corporea

#endif  // CORPOREA__GP_FORWARD_HPP_
