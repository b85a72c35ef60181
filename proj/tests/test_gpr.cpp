/*
 * Copyright 2026 The freda Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "freda/gpr.hpp"
#include "freda/rng.hpp"

using namespace freda;
using namespace freda::gpr;
using HP = HyperParams<double>;

namespace {

// Dense evaluation with an explicit inverse and determinant.
double naive_lml(const MatrixXd& x, const VectorXd& y, const HP& hp) {
  const Index n = x.rows();
  const MatrixXd k = hp.sigma_p2 * x * x.transpose() + hp.sigma_n2 * MatrixXd::Identity(n, n);
  return -0.5 * y.dot(k.inverse() * y) - 0.5 * std::log(k.determinant()) -
         0.5 * n * std::log(2 * std::numbers::pi);
}

double lml_log(const MatrixXd& x, const VectorXd& y, double lp, double ln) {
  return log_marginal_likelihood(x, y, HP{std::exp(lp), std::exp(ln)});
}

}  // namespace

TEST(Kernel, SpecExamples) {
  MatrixXd one(1, 1);
  one << 1;
  EXPECT_EQ(linear_kernel(one, one, 1.0)(0, 0), 1.0);
  MatrixXd a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_EQ(linear_kernel(a, b, 1.0)(0, 0), 0.0);

  Prng prng(1);
  const MatrixXd x = prng.normal_matrix(5, 3);
  const MatrixXd z = prng.normal_matrix(4, 3);
  EXPECT_LE((linear_kernel(x, z, 2.0) - 2.0 * linear_kernel(x, z, 1.0)).cwiseAbs().maxCoeff(), 1e-14);
  const MatrixXd k = linear_kernel(x, x, 0.7);
  EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(k).eigenvalues().minCoeff(), -1e-9);
  EXPECT_THROW(linear_kernel(x, MatrixXd(prng.normal_matrix(2, 2)), 1.0), Error);
}

TEST(Lml, HandExample) {
  MatrixXd x(1, 1);
  x << 1;
  VectorXd y(1);
  y << 0;
  EXPECT_NEAR(log_marginal_likelihood(x, y, HP{0.5, 0.5}), -0.5 * std::log(2 * std::numbers::pi),
              1e-14);
  EXPECT_NEAR(log_marginal_likelihood(x, y, HP{0.5, 0.5}), -0.91894, 1e-5);
}

TEST(Lml, MatchesNaiveDense) {
  Prng prng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const MatrixXd x = prng.normal_matrix(6, 3);
    const VectorXd y = prng.normal_matrix(6, 1).col(0);
    const HP hp{std::exp(prng.uniform(-2, 2)), std::exp(prng.uniform(-2, 2))};
    EXPECT_NEAR(log_marginal_likelihood(x, y, hp), naive_lml(x, y, hp), 1e-9);
  }
}

TEST(Lml, ZeroLabelsDependOnlyOnGram) {
  Prng prng(3);
  const MatrixXd x = prng.normal_matrix(5, 3);
  // An orthogonal rotation of the columns leaves X X^T unchanged.
  const Eigen::HouseholderQR<MatrixXd> qr(prng.normal_matrix(3, 3));
  const MatrixXd q = qr.householderQ();
  const VectorXd zero = VectorXd::Zero(5);
  EXPECT_NEAR(log_marginal_likelihood(x, zero, HP{1.3, 0.4}),
              log_marginal_likelihood(MatrixXd(x * q), zero, HP{1.3, 0.4}), 1e-10);
}

TEST(Lml, GradientMatchesFiniteDifferences) {
  Prng prng(4);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(prng.below(10));
    const Index q = 1 + static_cast<Index>(prng.below(6));
    const MatrixXd x = prng.normal_matrix(n, q);
    const VectorXd y = prng.normal_matrix(n, 1).col(0);
    const double lp = prng.uniform(-2, 2), ln = prng.uniform(-2, 2);
    const auto g = lml_gradient(x, y, HP{std::exp(lp), std::exp(ln)});
    // log-space derivative: d/d log s = s * d/ds
    const double fd_p = (lml_log(x, y, lp + h, ln) - lml_log(x, y, lp - h, ln)) / (2 * h);
    const double fd_n = (lml_log(x, y, lp, ln + h) - lml_log(x, y, lp, ln - h)) / (2 * h);
    const double an_p = std::exp(lp) * g.d_sigma_p2;
    const double an_n = std::exp(ln) * g.d_sigma_n2;
    EXPECT_LE(std::abs(an_p - fd_p), 1e-4 * std::max(1.0, std::abs(fd_p))) << trial;
    EXPECT_LE(std::abs(an_n - fd_n), 1e-4 * std::max(1.0, std::abs(fd_n))) << trial;
  }
}

TEST(Lml, NoiseGradientForZeroInputs) {
  const MatrixXd x = MatrixXd::Zero(4, 2);
  VectorXd y(4);
  y << 1, -2, 0.5, 3;
  const double sn = 0.7;
  const auto g = lml_gradient(x, y, HP{1.0, sn});
  EXPECT_NEAR(g.d_sigma_n2, 0.5 * y.squaredNorm() / (sn * sn) - 4 / (2 * sn), 1e-12);
}

TEST(Optimize, ZeroInputsRecoverSecondMoment) {
  const MatrixXd x = MatrixXd::Zero(6, 2);
  VectorXd y(6);
  y << 1, -2, 0.5, 3, -1, 0.25;
  const double m = y.squaredNorm() / 6;
  const auto hp = optimize_hyperparams(x, y, OptimBounds{}, HP{});
  EXPECT_NEAR(hp.sigma_n2, m, 1e-3 * m);
}

TEST(Optimize, BeatsDenseGridAndIsStationary) {
  Prng prng(5);
  const OptimBounds bounds;
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd x = prng.normal_matrix(8, 3);
    VectorXd y = x * VectorXd(prng.normal_matrix(3, 1).col(0)) +
                 0.5 * VectorXd(prng.normal_matrix(8, 1).col(0));
    const auto hp = optimize_hyperparams(x, y, bounds, HP{});
    const double got = log_marginal_likelihood(x, y, hp);
    double grid_best = -std::numeric_limits<double>::infinity();
    const int g = 200;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) {
        const double lp = bounds.log_p_lo + (bounds.log_p_hi - bounds.log_p_lo) * i / (g - 1);
        const double ln = bounds.log_n_lo + (bounds.log_n_hi - bounds.log_n_lo) * j / (g - 1);
        grid_best = std::max(grid_best, lml_log(x, y, lp, ln));
      }
    EXPECT_GE(got, grid_best - 1e-3) << trial;
    const bool interior = hp.sigma_p2 > 1.01e-6 && hp.sigma_p2 < 0.99e3 &&
                          hp.sigma_n2 > 1.01e-6 && hp.sigma_n2 < 0.99e3;
    if (interior) {
      const auto grad = lml_gradient(x, y, hp);
      EXPECT_LE(std::hypot(grad.d_sigma_p2, grad.d_sigma_n2), 1e-5) << trial;
    }
  }
}

TEST(Optimize, NeverWorseThanInitAndDeterministic) {
  Prng prng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(prng.below(12));
    const MatrixXd x = prng.normal_matrix(n, 4);
    const VectorXd y = prng.normal_matrix(n, 1).col(0);
    const HP init{std::exp(prng.uniform(-5, 5)), std::exp(prng.uniform(-5, 5))};
    OptimBounds bounds;
    bounds.max_evals = 1 + static_cast<int>(prng.below(400));
    const auto a = optimize_hyperparams(x, y, bounds, init);
    const auto b = optimize_hyperparams(x, y, bounds, init);
    EXPECT_EQ(a.sigma_p2, b.sigma_p2);
    EXPECT_EQ(a.sigma_n2, b.sigma_n2);
    EXPECT_GE(log_marginal_likelihood(x, y, a), log_marginal_likelihood(x, y, init) - 1e-12);
    EXPECT_GE(std::log(a.sigma_p2), bounds.log_p_lo - 1e-12);
    EXPECT_LE(std::log(a.sigma_p2), bounds.log_p_hi + 1e-12);
    EXPECT_GE(std::log(a.sigma_n2), bounds.log_n_lo - 1e-12);
    EXPECT_LE(std::log(a.sigma_n2), bounds.log_n_hi + 1e-12);
  }
}

TEST(Optimize, FixedPointReturnsInit) {
  Prng prng(7);
  const MatrixXd x = prng.normal_matrix(8, 3);
  const VectorXd y = prng.normal_matrix(8, 1).col(0);
  const auto once = optimize_hyperparams(x, y, OptimBounds{}, HP{});
  const auto twice = optimize_hyperparams(x, y, OptimBounds{}, once);
  EXPECT_NEAR(log_marginal_likelihood(x, y, twice), log_marginal_likelihood(x, y, once), 1e-9);
}

TEST(Optimize, RejectsBadInputs) {
  const MatrixXd x = MatrixXd::Ones(3, 2);
  const VectorXd y = VectorXd::Ones(3);
  OptimBounds bad;
  bad.log_p_lo = 1;
  bad.log_p_hi = 0;
  EXPECT_THROW(optimize_hyperparams(x, y, bad, HP{}), Error);
  EXPECT_THROW(optimize_hyperparams(x, y, OptimBounds{}, HP{-1, 1}), Error);
  OptimBounds zero_evals;
  zero_evals.max_evals = 0;
  EXPECT_THROW(optimize_hyperparams(x, y, zero_evals, HP{}), Error);
}

TEST(Posterior, HandExampleAndEdges) {
  MatrixXd x(1, 1);
  x << 1;
  VectorXd y(1);
  y << 2;
  const auto p = gpr_posterior(x, y, x, HP{1, 1});
  EXPECT_NEAR(p.mean(0), 1.0, 1e-15);
  EXPECT_NEAR(p.variance(0), 0.5, 1e-15);

  const MatrixXd g = x * x.transpose();
  const auto q = posterior_from_grams<double>(g, g, g, y, HP{1, 1});
  EXPECT_NEAR(q.mean(0), 1.0, 1e-15);
  EXPECT_NEAR(q.variance(0), 0.5, 1e-15);

  const auto empty = gpr_posterior(x, y, MatrixXd(0, 1), HP{1, 1});
  EXPECT_EQ(empty.mean.size(), 0);
  EXPECT_EQ(empty.variance.size(), 0);
}

TEST(Posterior, NoiselessInterpolation) {
  Prng prng(8);
  const MatrixXd x = prng.normal_matrix(4, 6);  // n < q: exact fit possible
  const VectorXd y = prng.normal_matrix(4, 1).col(0);
  const auto p = gpr_posterior(x, y, x, HP{1.0, 1e-10});
  EXPECT_LE((p.mean - y).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Posterior, GramRouteMatchesDirect) {
  Prng prng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Index ns = 3 + static_cast<Index>(prng.below(10));
    const Index nt = 1 + static_cast<Index>(prng.below(8));
    const Index q = 1 + static_cast<Index>(prng.below(6));
    const MatrixXd xs = prng.normal_matrix(ns, q);
    const MatrixXd xt = prng.normal_matrix(nt, q);
    const VectorXd y = prng.normal_matrix(ns, 1).col(0);
    const HP hp{std::exp(prng.uniform(-2, 2)), std::exp(prng.uniform(-2, 1))};
    const auto direct = gpr_posterior(xs, y, xt, hp);
    const MatrixXd gss = xs * xs.transpose();
    const MatrixXd gst = xs * xt.transpose();
    const MatrixXd gtt = xt * xt.transpose();
    const auto via = posterior_from_grams<double>(gss, gst, gtt, y, hp);
    EXPECT_LE((direct.mean - via.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((direct.cov - via.cov).cwiseAbs().maxCoeff(), 1e-9);

    // symmetric PSD, never above the prior
    EXPECT_LE((direct.cov - direct.cov.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(direct.cov).eigenvalues().minCoeff(), -1e-8);
    const VectorXd prior = hp.sigma_p2 * gtt.diagonal();
    EXPECT_TRUE(((direct.variance - prior).array() <= 1e-8).all());
    EXPECT_TRUE((direct.variance.array() >= 0).all());
  }
}

TEST(Posterior, UncorrelatedTestPointsGetThePrior) {
  Prng prng(10);
  const MatrixXd gss = MatrixXd::Identity(3, 3) * 2.0;
  const MatrixXd gst = MatrixXd::Zero(3, 2);
  MatrixXd gtt(2, 2);
  gtt << 2, 0.5, 0.5, 1;
  const VectorXd y = prng.normal_matrix(3, 1).col(0);
  const auto p = posterior_from_grams<double>(gss, gst, gtt, y, HP{1.5, 0.3});
  EXPECT_TRUE(p.mean.isZero(0));
  EXPECT_LE((p.cov - 1.5 * gtt).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(posterior_from_grams<double>(gss, MatrixXd::Zero(2, 2), gtt, y, HP{}), Error);
}

TEST(Factorize, JitterLadder) {
  MatrixXd ones(2, 2);
  ones << 1, 1, 1, 1;
  const auto f = factorize_covariance(ones, HP{1.0, 1e-300});
  EXPECT_GT(f.jitter, 0.0);

  MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  try {
    factorize_covariance(indefinite, HP{1.0, 1e-9});
    FAIL() << "expected a factorization error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFactorization);
  }
}
