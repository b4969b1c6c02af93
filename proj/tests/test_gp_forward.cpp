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

#include "corporea/errors.hpp"
#include "corporea/gp_forward.hpp"
#include "corporea/rng.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace corporea;

namespace
{

struct RandomSet
{
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

RandomSet random_set(Rng & rng, Eigen::Index n, Eigen::Index d, Eigen::Index m)
{
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  RandomSet s{Eigen::MatrixXd(n, d), Eigen::MatrixXd(n, m)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) s.x(i, j) = u(rng);
    for (Eigen::Index j = 0; j < m; ++j) s.y(i, j) = std::sin(s.x(i, 0) * (j + 1)) + 0.3 * u(rng);
  }
  return s;
}

}  // namespace

TEST_CASE("kernel params validation")
{
  KernelParams p;
  CHECK_NOTHROW(p.validate());
  p.lengthscale = 0.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = {};
  p.signal_variance = -1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = {};
  p.noise_variance = -1e-9;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("degenerate single zero target")
{
  const auto gp = GPModel::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), {});
  CHECK(gp.alpha()(0, 0) == 0.0);
  CHECK(gp.predict_mean(Eigen::VectorXd::Zero(1))[0] == 0.0);
  const KernelParams p;
  const double expected = -0.5 * std::log(p.signal_variance + p.noise_variance) - 0.5 * std::log(2 * std::numbers::pi);
  CHECK(gp.log_marginal_likelihood() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("two-point interpolation and dense oracle")
{
  Eigen::MatrixXd x(2, 1), y(2, 1);
  x << 0, 1;
  y << 0, 1;
  const KernelParams p{1.0, 1.0, 1e-6};
  const auto gp = GPModel::fit(x, y, p);
  CHECK(std::abs(gp.predict_mean(Eigen::VectorXd::Constant(1, 0.0))[0]) < 1e-3);
  CHECK(std::abs(gp.predict_mean(Eigen::VectorXd::Constant(1, 1.0))[0] - 1.0) < 1e-3);
  const oracle::DenseGp ref{x, y, 1.0, 1.0, 1e-6};
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.5);
  CHECK(std::abs(gp.predict_mean(q)[0] - ref.mean(q)[0]) < 1e-10);
  CHECK(std::abs(gp.predict_variance(q)[0] - ref.variance(q)) < 1e-9);
}

TEST_CASE("dense oracle equivalence for small sets")
{
  Rng rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Eigen::Index n = 1; n <= 20; ++n) {
    const RandomSet s = random_set(rng, n, 3, 2);
    const KernelParams p{0.8, 1.3, 1e-3};
    const auto gp = GPModel::fit(s.x, s.y, p);
    const oracle::DenseGp ref{s.x, s.y, p.lengthscale, p.signal_variance, p.noise_variance + gp.jitter()};
    for (int q = 0; q < 5; ++q) {
      const Eigen::Vector3d mu(u(rng), u(rng), u(rng));
      CHECK((gp.predict_mean(mu) - ref.mean(mu)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((gp.predict_variance(mu).array() - ref.variance(mu)).abs().maxCoeff() < 1e-9);
    }
    CHECK(std::abs(gp.log_marginal_likelihood() - ref.lml()) < 1e-9);
  }
}

TEST_CASE("three-point LML against dense determinant")
{
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << -1, 0.2, 1.4;
  y << 0.5, -0.3, 0.9;
  const KernelParams p{0.7, 1.0, 1e-2};
  const auto gp = GPModel::fit(x, y, p);
  const oracle::DenseGp ref{x, y, 0.7, 1.0, 1e-2};
  CHECK(std::abs(gp.log_marginal_likelihood() - ref.lml()) < 1e-9);
}

TEST_CASE("far field and noiseless interpolation")
{
  Rng rng(5);
  const RandomSet s = random_set(rng, 10, 3, 1);
  const KernelParams p{0.5, 1.0, 1e-6};
  const auto gp = GPModel::fit(s.x, s.y, p);
  const Eigen::Vector3d far = Eigen::Vector3d::Constant(20.0 * p.lengthscale + 2.0);
  CHECK(std::abs(gp.predict_mean(far)[0]) < 1e-6);
  CHECK(std::abs(gp.predict_variance(far)[0] - p.signal_variance) < 1e-6);
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    const Eigen::VectorXd xi = s.x.row(i).transpose();
    CHECK(std::abs(gp.predict_mean(xi)[0] - s.y(i, 0)) <= 3.0 * std::sqrt(p.noise_variance) + 1e-3);
  }

  const auto exact = GPModel::fit(s.x, s.y, KernelParams{0.5, 1.0, 0.0});
  CHECK(exact.predict_variance(s.x.row(0).transpose())[0] <= 1e-8);
}

TEST_CASE("cholesky reconstructs the regularized Gram matrix")
{
  Rng rng(8);
  const RandomSet s = random_set(rng, 15, 3, 1);
  const KernelParams p{0.6, 1.0, 1e-4};
  const auto gp = GPModel::fit(s.x, s.y, p);
  oracle::DenseGp ref{s.x, s.y, p.lengthscale, p.signal_variance, p.noise_variance + gp.jitter()};
  const Eigen::MatrixXd g = ref.gram();
  const Eigen::MatrixXd l = gp.cholesky();
  CHECK((l * l.transpose() - g).norm() / g.norm() < 1e-8);
}

TEST_CASE("variance bounds and permutation invariance")
{
  Rng rng(12);
  const RandomSet s = random_set(rng, 12, 3, 2);
  const KernelParams p{0.9, 1.5, 1e-4};
  const auto gp = GPModel::fit(s.x, s.y, p);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
  const auto gp2 = GPModel::fit(perm * s.x, perm * s.y, p);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int q = 0; q < 50; ++q) {
    const Eigen::Vector3d mu(u(rng), u(rng), u(rng));
    const double v = gp.predict_variance(mu)[0];
    CHECK(v >= 0.0);
    CHECK(v <= p.signal_variance + 1e-9);
    CHECK((gp.predict_mean(mu) - gp2.predict_mean(mu)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient against finite differences")
{
  SUBCASE("antisymmetric pair")
  {
    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << -0.5, 0.5;
    y << -1.0, 1.0;
    const auto gp = GPModel::fit(x, y, KernelParams{0.7, 1.0, 1e-4});
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(1);
    const Eigen::MatrixXd fd =
      oracle::numeric_jacobian([&](const Eigen::VectorXd & m) { return gp.predict_mean(m); }, q);
    const Eigen::MatrixXd an = gp.predict_gradient(q);
    CHECK((an - fd).norm() / fd.norm() < 1e-6);
  }
  SUBCASE("single point is a maximum")
  {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 3, 0.3);
    const auto gp = GPModel::fit(x, Eigen::MatrixXd::Constant(1, 1, 2.0), {});
    CHECK(gp.predict_gradient(x.row(0).transpose()).norm() == 0.0);
  }
  SUBCASE("random sweep")
  {
    Rng rng(31);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    const RandomSet s = random_set(rng, 30, 3, 2);
    const auto gp = GPModel::fit(s.x, s.y, KernelParams{0.7, 1.0, 1e-4});
    for (int q = 0; q < 100; ++q) {
      const Eigen::VectorXd mu = Eigen::Vector3d(u(rng), u(rng), u(rng));
      const Eigen::MatrixXd fd =
        oracle::numeric_jacobian([&](const Eigen::VectorXd & m) { return gp.predict_mean(m); }, mu);
      CHECK((gp.predict_gradient(mu) - fd).norm() / std::max(fd.norm(), 1e-12) < 1e-5);
    }
  }
}

TEST_CASE("dimension mismatch and non-finite input")
{
  CHECK_THROWS_AS(GPModel::fit(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 1), {}), DomainError);
  CHECK_THROWS_AS(GPModel::fit(Eigen::MatrixXd::Zero(0, 2), Eigen::MatrixXd::Zero(0, 1), {}), DomainError);
  const auto gp = GPModel::fit(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 1), {});
  CHECK_THROWS_AS(gp.predict_mean(Eigen::VectorXd::Zero(3)), DomainError);
}

TEST_CASE("duplicate inputs need jitter when noise is zero")
{
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 0.0, 0.0, 1.0;
  y << 1.0, 1.0, 0.0;
  const auto gp = GPModel::fit(x, y, KernelParams{1.0, 1.0, 0.0});
  CHECK(gp.jitter() > 0.0);
  CHECK(gp.jitter() <= 1e-4);
}

TEST_CASE("lengthscale selection prefers a sensible value")
{
  Rng rng(4);
  const RandomSet s = random_set(rng, 60, 1, 1);
  Eigen::MatrixXd y = s.x.col(0).array().sin().matrix();
  const KernelParams base{1.0, 1.0, 1e-4};
  const auto good = GPModel::fit(s.x, y, base);
  const auto bad = GPModel::fit(s.x, y, KernelParams{100.0, 1.0, 1e-4});
  CHECK(good.log_marginal_likelihood() > bad.log_marginal_likelihood());
  const auto grid = log_spaced(0.25, 4.0, 9);
  REQUIRE(grid.size() == 9);
  CHECK(grid.front() == doctest::Approx(0.25));
  CHECK(grid.back() == doctest::Approx(4.0));
  const KernelParams chosen = select_lengthscale(s.x, y, base, grid);
  double best = -1e300;
  for (double l : grid) {
    best = std::max(best, GPModel::fit(s.x, y, KernelParams{l, 1.0, 1e-4}).log_marginal_likelihood());
  }
  CHECK(GPModel::fit(s.x, y, chosen).log_marginal_likelihood() == doctest::Approx(best));
}

TEST_CASE("sensory models")
{
  Rng rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd x(40, 3), y(40, 2), t(40, 2);
  for (int i = 0; i < 40; ++i) {
    x.row(i) << u(rng), u(rng), u(rng);
    y(i, 0) = 300.0 + 100.0 * std::cos(x(i, 0));
    y(i, 1) = 200.0 - 80.0 * std::sin(x(i, 1));
    t(i, 0) = x(i, 0) > 0.3 ? 1.0 : 0.0;
    t(i, 1) = 0.0;
  }
  y(3, 0) = std::numeric_limits<double>::quiet_NaN();

  const auto visual = GpSensoryModel::fit(x, y, KernelParams{}, OutputTransform::identity);
  CHECK(visual.gp().inputs().rows() == 39);
  CHECK(visual.raw_targets().rows() == 39);
  const Eigen::VectorXd q = x.row(0).transpose();
  CHECK((visual.predict(q) - y.row(0).transpose()).norm() < 0.05);

  const auto tactile = GpSensoryModel::fit(x, t, KernelParams{}, OutputTransform::logistic);
  const Eigen::VectorXd pt = tactile.predict(q);
  CHECK(pt.minCoeff() > 0.0);
  CHECK(pt.maxCoeff() < 1.0);
  CHECK(std::abs(pt[0] - t(0, 0)) < 0.05);
  CHECK_THROWS_AS(GpSensoryModel::fit(x, y, KernelParams{}, OutputTransform::logistic), DomainError);

  for (const SensoryModel * m : {static_cast<const SensoryModel *>(&visual), static_cast<const SensoryModel *>(&tactile)}) {
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd mu = Eigen::Vector3d(u(rng), u(rng), u(rng));
      const Eigen::MatrixXd fd = oracle::numeric_jacobian([&](const Eigen::VectorXd & v) { return m->predict(v); }, mu);
      CHECK((m->jacobian(mu) - fd).norm() / std::max(fd.norm(), 1e-9) < 1e-4);
    }
    CHECK(m->noise_variance() > 0.0);
    CHECK(m->predictive_variance(q) >= 0.0);
  }

  const IdentityModel id(3, 1e-4);
  const Eigen::Vector3d mu(0.1, 0.2, 0.3);
  CHECK(id.predict(mu) == mu);
  CHECK(id.jacobian(mu) == Eigen::Matrix3d::Identity());
  CHECK(id.noise_variance() == 1e-4);
}

TEST_CASE("modality names and model set")
{
  CHECK(parse_modality("visual") == Modality::visual);
  CHECK(parse_modality("visual_self") == Modality::visual);
  CHECK(parse_modality("tactile") == Modality::tactile);
  CHECK(to_string(Modality::proprio) == "proprio");
  CHECK_THROWS_AS(parse_modality("smell"), DomainError);

  ForwardModelSet set;
  CHECK_FALSE(set.has(Modality::visual));
  CHECK_THROWS_AS(set.at(Modality::visual), DomainError);
  set.set(Modality::proprio, std::make_shared<IdentityModel>(3, 1e-4));
  CHECK(set.latent_dim() == 3);
  CHECK_THROWS_AS(set.set(Modality::visual, std::make_shared<IdentityModel>(2, 1.0)), DomainError);
}
