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

// Linear-kernel Gaussian-process regression.
//
// The kernel is k(a, b) = sigma_p2 * <a, b>, i.e. Bayesian linear regression
// with an isotropic prior of variance sigma_p2 on the coefficients. With
// Gram matrix G = X X^T the training covariance is
//
//     K = sigma_p2 * G + sigma_n2 * I.
//
// Cross-covariances are oriented test-rows x train-rows, so the predictive
// mean is K_* K^{-1} y with K_* of shape n_test x n_train.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "freda/common.hpp"

namespace freda::gpr {

template <typename Scalar>
struct HyperParams {
  Scalar sigma_p2 = Scalar(1);  // prior variance of the coefficients
  Scalar sigma_n2 = Scalar(1);  // additive noise variance

  bool valid() const {
    return std::isfinite(sigma_p2) && std::isfinite(sigma_n2) &&
           sigma_p2 > Scalar(0) && sigma_n2 > Scalar(0);
  }
  void validate() const {
    require(valid(), ErrorCode::kInvalidArgument,
            "gpr::HyperParams: variances must be finite and > 0");
  }
};

template <typename Scalar>
struct Prediction {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
  Vector<Scalar> variance;  // diag(cov), clamped at 0
};

// Box constraints in natural-log space.
struct OptimBounds {
  double log_p_lo = std::log(1e-6);
  double log_p_hi = std::log(1e3);
  double log_n_lo = std::log(1e-6);
  double log_n_hi = std::log(1e3);
  int max_evals = 400;

  static OptimBounds linear(double lo, double hi, int max_evals = 400) {
    return {std::log(lo), std::log(hi), std::log(lo), std::log(hi), max_evals};
  }
  void validate() const {
    require(log_p_lo < log_p_hi && log_n_lo < log_n_hi,
            ErrorCode::kInvalidArgument, "gpr::OptimBounds: lo must be < hi");
    require(max_evals >= 1, ErrorCode::kInvalidArgument,
            "gpr::OptimBounds: max_evals must be >= 1");
  }
};

// Jitter ladder tried (absolute, added to sigma_n2) when K is not
// numerically positive definite.
inline constexpr std::array<double, 3> kJitterLadder = {1e-8, 1e-6, 1e-4};

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> linear_kernel(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    typename DerivedA::Scalar sigma_p2) {
  require(a.cols() == b.cols(), ErrorCode::kShapeMismatch,
          "linear_kernel: inner dimensions " + std::to_string(a.cols()) +
              " vs " + std::to_string(b.cols()));
  return sigma_p2 * (a * b.transpose());
}

template <typename Scalar>
struct Factorization {
  Eigen::LLT<Matrix<Scalar>> llt;
  Scalar jitter = Scalar(0);
};

// Cholesky of sigma_p2 * gram + sigma_n2 * I with the jitter ladder.
template <typename Derived>
Factorization<typename Derived::Scalar> factorize_covariance(
    const Eigen::MatrixBase<Derived>& gram,
    const HyperParams<typename Derived::Scalar>& hp) {
  using Scalar = typename Derived::Scalar;
  require(gram.rows() == gram.cols(), ErrorCode::kShapeMismatch,
          "factorize_covariance: gram must be square");
  const Index n = gram.rows();
  Factorization<Scalar> f;
  Matrix<Scalar> k = hp.sigma_p2 * gram;
  k.diagonal().array() += hp.sigma_n2;
  f.llt.compute(k);
  if (f.llt.info() == Eigen::Success) return f;
  for (double jitter : kJitterLadder) {
    Matrix<Scalar> kj = k;
    kj.diagonal().array() += Scalar(jitter);
    f.llt.compute(kj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = Scalar(jitter);
      return f;
    }
  }
  fail(ErrorCode::kFactorization,
       "factorize_covariance: K (" + shape_str(n, n) +
           ") not positive definite after jitter 1e-4");
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar log_marginal_likelihood(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
    const HyperParams<typename DerivedX::Scalar>& hp) {
  using Scalar = typename DerivedX::Scalar;
  hp.validate();
  require(x.rows() >= 1 && x.rows() == y.rows(), ErrorCode::kShapeMismatch,
          "log_marginal_likelihood: X/y row mismatch");
  const Index n = x.rows();
  const Matrix<Scalar> gram = x * x.transpose();
  const auto f = factorize_covariance(gram, hp);
  const Vector<Scalar> half = f.llt.matrixL().solve(y);
  const Scalar log_det =
      Scalar(2) * f.llt.matrixLLT().diagonal().array().log().sum();
  return Scalar(-0.5) * half.squaredNorm() - Scalar(0.5) * log_det -
         Scalar(0.5) * Scalar(n) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
struct LmlGradient {
  Scalar d_sigma_p2 = 0;
  Scalar d_sigma_n2 = 0;
};

// d logL / d theta = 1/2 a^T (dK) a - 1/2 tr(K^{-1} dK), a = K^{-1} y, with
// dK/d sigma_p2 = X X^T and dK/d sigma_n2 = I.
template <typename DerivedX, typename DerivedY>
LmlGradient<typename DerivedX::Scalar> lml_gradient(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
    const HyperParams<typename DerivedX::Scalar>& hp) {
  using Scalar = typename DerivedX::Scalar;
  hp.validate();
  require(x.rows() >= 1 && x.rows() == y.rows(), ErrorCode::kShapeMismatch,
          "lml_gradient: X/y row mismatch");
  const Index n = x.rows();
  const Matrix<Scalar> gram = x * x.transpose();
  const auto f = factorize_covariance(gram, hp);
  const Vector<Scalar> alpha = f.llt.solve(y);
  const Matrix<Scalar> l_inv_x = f.llt.matrixL().solve(Matrix<Scalar>(x));
  const Matrix<Scalar> l_inv =
      f.llt.matrixL().solve(Matrix<Scalar>::Identity(n, n));
  LmlGradient<Scalar> g;
  g.d_sigma_p2 = Scalar(0.5) * (x.transpose() * alpha).squaredNorm() -
                 Scalar(0.5) * l_inv_x.squaredNorm();
  g.d_sigma_n2 =
      Scalar(0.5) * alpha.squaredNorm() - Scalar(0.5) * l_inv.squaredNorm();
  return g;
}

namespace detail {

// Spectral form of the evidence. With X = U S V^T (thin SVD), K has
// eigenvalues sigma_p2 * s_i^2 + sigma_n2 on span(U) and sigma_n2 on its
// complement, so each evaluation costs O(rank) after one decomposition.
template <typename Scalar>
class SpectralEvidence {
 public:
  template <typename DerivedX, typename DerivedY>
  SpectralEvidence(const Eigen::MatrixBase<DerivedX>& x,
                   const Eigen::MatrixBase<DerivedY>& y)
      : n_(x.rows()) {
    const Vector<Scalar> yy = y;
    if (x.cols() == 0 || x.isZero(0)) {
      rest_ = yy.squaredNorm();
      return;
    }
    Eigen::BDCSVD<Matrix<Scalar>> svd(Matrix<Scalar>(x), Eigen::ComputeThinU);
    eig_ = svd.singularValues().array().square();
    proj2_ = (svd.matrixU().transpose() * yy).array().square();
    rest_ = std::max(Scalar(0), yy.squaredNorm() - proj2_.sum());
  }

  Scalar value(Scalar sp, Scalar sn) const {
    const Index r = eig_.size();
    Scalar fit = rest_ / sn;
    Scalar logdet = Scalar(n_ - r) * std::log(sn);
    for (Index i = 0; i < r; ++i) {
      const Scalar s = sp * eig_(i) + sn;
      fit += proj2_(i) / s;
      logdet += std::log(s);
    }
    return Scalar(-0.5) * fit - Scalar(0.5) * logdet -
           Scalar(0.5) * Scalar(n_) *
               std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  }

  std::array<Scalar, 2> gradient(Scalar sp, Scalar sn) const {
    const Index r = eig_.size();
    Scalar dp = 0;
    Scalar dn = Scalar(0.5) * rest_ / (sn * sn) -
                Scalar(0.5) * Scalar(n_ - r) / sn;
    for (Index i = 0; i < r; ++i) {
      const Scalar s = sp * eig_(i) + sn;
      const Scalar q = proj2_(i) / (s * s);
      dp += Scalar(0.5) * (q * eig_(i) - eig_(i) / s);
      dn += Scalar(0.5) * (q - Scalar(1) / s);
    }
    return {dp, dn};
  }

 private:
  Index n_;
  Vector<Scalar> eig_;
  Vector<Scalar> proj2_;
  Scalar rest_ = 0;
};

}  // namespace detail

// Deterministic log-space maximisation: a 16x16 grid over the bounds seeds
// a projected quasi-Newton ascent with backtracking. Never returns a point
// whose likelihood is below that of `init`.
template <typename DerivedX, typename DerivedY>
HyperParams<typename DerivedX::Scalar> optimize_hyperparams(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
    const OptimBounds& bounds,
    const HyperParams<typename DerivedX::Scalar>& init) {
  using Scalar = typename DerivedX::Scalar;
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
  using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
  bounds.validate();
  init.validate();
  require(x.rows() >= 1 && x.rows() == y.rows(), ErrorCode::kShapeMismatch,
          "optimize_hyperparams: X/y row mismatch");

  const detail::SpectralEvidence<Scalar> evidence(x, y);
  const Vec2 lo(Scalar(bounds.log_p_lo), Scalar(bounds.log_n_lo));
  const Vec2 hi(Scalar(bounds.log_p_hi), Scalar(bounds.log_n_hi));
  int evals = 0;
  auto objective = [&](const Vec2& t) {
    ++evals;
    const Scalar v = evidence.value(std::exp(t(0)), std::exp(t(1)));
    return std::isfinite(v) ? v : -std::numeric_limits<Scalar>::infinity();
  };
  auto log_gradient = [&](const Vec2& t) {
    const Scalar sp = std::exp(t(0));
    const Scalar sn = std::exp(t(1));
    const auto g = evidence.gradient(sp, sn);
    return Vec2(sp * g[0], sn * g[1]);
  };
  auto project = [&](Vec2 t) { return t.cwiseMax(lo).cwiseMin(hi); };
  // Zero the components that push against an active bound.
  auto projected = [&](const Vec2& t, Vec2 g) {
    for (int k = 0; k < 2; ++k) {
      if ((t(k) <= lo(k) && g(k) < 0) || (t(k) >= hi(k) && g(k) > 0)) g(k) = 0;
    }
    return g;
  };

  const Vec2 t_init = project(Vec2(std::log(init.sigma_p2), std::log(init.sigma_n2)));
  Vec2 best = t_init;
  Scalar best_val = objective(t_init);
  constexpr int kGrid = 16;
  for (int i = 0; i < kGrid && evals < bounds.max_evals; ++i) {
    for (int j = 0; j < kGrid && evals < bounds.max_evals; ++j) {
      const Vec2 t(lo(0) + (hi(0) - lo(0)) * Scalar(i) / Scalar(kGrid - 1),
                   lo(1) + (hi(1) - lo(1)) * Scalar(j) / Scalar(kGrid - 1));
      const Scalar v = objective(t);
      if (v > best_val) {
        best_val = v;
        best = t;
      }
    }
  }
  require(std::isfinite(best_val), ErrorCode::kFactorization,
          "optimize_hyperparams: every evaluation failed");

  Vec2 t = best;
  Scalar f = best_val;
  Vec2 g = projected(t, log_gradient(t));
  Mat2 inv_hess = Mat2::Identity();
  while (evals < bounds.max_evals && g.norm() > Scalar(1e-10)) {
    Vec2 dir = inv_hess * g;
    if (dir.dot(g) <= 0) {
      inv_hess.setIdentity();
      dir = g;
    }
    Scalar step = 1;
    bool moved = false;
    while (evals < bounds.max_evals && step > Scalar(1e-12)) {
      const Vec2 cand = project(t + step * dir);
      const Scalar fc = objective(cand);
      if (fc >= f + Scalar(1e-4) * g.dot(cand - t) && fc > f) {
        const Vec2 s = cand - t;
        const Vec2 g_new = projected(cand, log_gradient(cand));
        // BFGS on the negated objective; y = -(g_new - g).
        const Vec2 yv = g - g_new;
        const Scalar sy = s.dot(yv);
        if (sy > Scalar(1e-14)) {
          const Scalar rho = Scalar(1) / sy;
          const Mat2 id = Mat2::Identity();
          inv_hess = (id - rho * s * yv.transpose()) * inv_hess *
                         (id - rho * yv * s.transpose()) +
                     rho * s * s.transpose();
        }
        t = cand;
        f = fc;
        g = g_new;
        moved = true;
        break;
      }
      step *= Scalar(0.5);
    }
    if (!moved) break;
  }

  HyperParams<Scalar> out{std::exp(t(0)), std::exp(t(1))};
  // Final acceptance against init uses the Cholesky route, so the contract
  // holds for the public objective and not only for the spectral one.
  if (log_marginal_likelihood(x, y, out) < log_marginal_likelihood(x, y, init)) {
    return init;
  }
  return out;
}

// The label-free part of the posterior: mean = weights * y. Gram blocks:
// g_ss = X_S X_S^T, g_st = X_S X_T^T (n_S x n_t), g_tt = X_T X_T^T.
template <typename Scalar>
struct PredictiveOperator {
  Matrix<Scalar> weights;  // K_* K^{-1}, n_t x n_S
  Matrix<Scalar> cov;      // K_** - K_* K^{-1} K_*^T
  Scalar jitter = Scalar(0);
};

template <typename Scalar>
PredictiveOperator<Scalar> predictive_operator(const Matrix<Scalar>& g_ss,
                                               const Matrix<Scalar>& g_st,
                                               const Matrix<Scalar>& g_tt,
                                               const HyperParams<Scalar>& hp) {
  hp.validate();
  const Index ns = g_ss.rows();
  const Index nt = g_tt.rows();
  require(g_ss.cols() == ns && g_st.rows() == ns && g_st.cols() == nt &&
              g_tt.cols() == nt,
          ErrorCode::kShapeMismatch,
          "posterior_from_grams: inconsistent block shapes G_SS " +
              shape_str(g_ss.rows(), g_ss.cols()) + ", G_ST " +
              shape_str(g_st.rows(), g_st.cols()) + ", G_TT " +
              shape_str(g_tt.rows(), g_tt.cols()));
  PredictiveOperator<Scalar> op;
  if (nt == 0) {
    op.weights.resize(0, ns);
    op.cov.resize(0, 0);
    return op;
  }
  const auto f = factorize_covariance(g_ss, hp);
  op.jitter = f.jitter;
  const Matrix<Scalar> k_star_t = hp.sigma_p2 * g_st;  // K_*^T, n_S x n_t
  op.weights = f.llt.solve(k_star_t).transpose();
  const Matrix<Scalar> v = f.llt.matrixL().solve(k_star_t);
  op.cov = hp.sigma_p2 * g_tt - v.transpose() * v;
  op.cov = Scalar(0.5) * (op.cov + op.cov.transpose()).eval();
  return op;
}

template <typename Scalar>
Prediction<Scalar> posterior_from_grams(const Matrix<Scalar>& g_ss,
                                        const Matrix<Scalar>& g_st,
                                        const Matrix<Scalar>& g_tt,
                                        const Vector<Scalar>& y,
                                        const HyperParams<Scalar>& hp) {
  require(y.size() == g_ss.rows(), ErrorCode::kShapeMismatch,
          "posterior_from_grams: y has " + std::to_string(y.size()) +
              " entries, G_SS has " + std::to_string(g_ss.rows()) + " rows");
  const auto op = predictive_operator(g_ss, g_st, g_tt, hp);
  Prediction<Scalar> p;
  p.mean = op.weights * y;
  p.cov = op.cov;
  p.variance = p.cov.diagonal().cwiseMax(Scalar(0));
  return p;
}

template <typename DerivedA, typename DerivedY, typename DerivedB>
Prediction<typename DerivedA::Scalar> gpr_posterior(
    const Eigen::MatrixBase<DerivedA>& x_train,
    const Eigen::MatrixBase<DerivedY>& y,
    const Eigen::MatrixBase<DerivedB>& x_test,
    const HyperParams<typename DerivedA::Scalar>& hp) {
  using Scalar = typename DerivedA::Scalar;
  hp.validate();
  require(x_train.cols() == x_test.cols() || x_test.rows() == 0,
          ErrorCode::kShapeMismatch, "gpr_posterior: feature dimension mismatch");
  require(x_train.rows() == y.rows(), ErrorCode::kShapeMismatch,
          "gpr_posterior: X/y row mismatch");
  Prediction<Scalar> p;
  if (x_test.rows() == 0) {
    p.mean.resize(0);
    p.cov.resize(0, 0);
    p.variance.resize(0);
    return p;
  }
  const Index n = x_train.rows();
  const Matrix<Scalar> k = linear_kernel(x_train, x_train, hp.sigma_p2) +
                           hp.sigma_n2 * Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> k_star = linear_kernel(x_test, x_train, hp.sigma_p2);
  const Matrix<Scalar> k_ss = linear_kernel(x_test, x_test, hp.sigma_p2);
  Eigen::LLT<Matrix<Scalar>> llt(k);
  Scalar jitter = 0;
  for (std::size_t i = 0; llt.info() != Eigen::Success; ++i) {
    require(i < kJitterLadder.size(), ErrorCode::kFactorization,
            "gpr_posterior: K not positive definite after jitter 1e-4");
    jitter = Scalar(kJitterLadder[i]);
    llt.compute(k + jitter * Matrix<Scalar>::Identity(n, n));
  }
  p.mean = k_star * llt.solve(Vector<Scalar>(y));
  p.cov = k_ss - k_star * llt.solve(Matrix<Scalar>(k_star.transpose()));
  p.cov = Scalar(0.5) * (p.cov + p.cov.transpose()).eval();
  p.variance = p.cov.diagonal().cwiseMax(Scalar(0));
  return p;
}

}  // namespace freda::gpr
