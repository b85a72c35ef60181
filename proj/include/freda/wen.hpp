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

// Weighted elastic net
//
//     min_b ||y - X b||^2 + lambda * J(b),
//     J(b) = alpha * sum_f w_f |b_f| + (1 - alpha) / 2 * sum_f w_f b_f^2,
//
// trained either federatively (FedAvg over full-batch subgradient steps) or
// centrally by cyclic coordinate descent, which serves as the oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "freda/common.hpp"
#include "freda/rng.hpp"

namespace freda::wen {

template <typename Scalar>
struct Config {
  Scalar alpha = Scalar(0.8);
  Scalar lambda = Scalar(0);
  Vector<Scalar> weights;  // one per feature, >= 0
  int rounds = 100;        // global iterations T
  int epochs = 20;         // local epochs E
  Scalar eta0 = Scalar(1e-4);
  Scalar eta_final = Scalar(1e-5);

  void validate(Index p) const {
    require(alpha > Scalar(0) && alpha <= Scalar(1), ErrorCode::kInvalidArgument,
            "wen::Config: alpha must be in (0, 1]");
    require(lambda >= Scalar(0) && std::isfinite(lambda),
            ErrorCode::kInvalidArgument, "wen::Config: lambda must be >= 0");
    require(weights.size() == p, ErrorCode::kShapeMismatch,
            "wen::Config: expected " + std::to_string(p) + " weights, got " +
                std::to_string(weights.size()));
    require(weights.allFinite() && (weights.array() >= Scalar(0)).all(),
            ErrorCode::kInvalidArgument, "wen::Config: weights must be finite, >= 0");
    require(rounds >= 1 && epochs >= 1, ErrorCode::kInvalidArgument,
            "wen::Config: rounds and epochs must be >= 1");
    require(eta_final > Scalar(0) && eta_final <= eta0, ErrorCode::kInvalidArgument,
            "wen::Config: need 0 < eta_final <= eta0");
  }
};

template <typename Scalar>
struct Model {
  Vector<Scalar> beta;
};

struct LambdaGrid {
  std::vector<double> values;  // strictly decreasing
};

template <typename Scalar>
struct Shard {
  Matrix<Scalar> x;
  Vector<Scalar> y;
};

template <typename Scalar>
Scalar penalty(const Vector<Scalar>& beta, const Config<Scalar>& cfg) {
  const auto w = cfg.weights.array();
  return cfg.alpha * (w * beta.array().abs()).sum() +
         Scalar(0.5) * (Scalar(1) - cfg.alpha) * (w * beta.array().square()).sum();
}

template <typename Scalar>
Scalar wen_objective(const Matrix<Scalar>& x, const Vector<Scalar>& y,
                     const Vector<Scalar>& beta, const Config<Scalar>& cfg) {
  require(x.rows() == y.size() && x.cols() == beta.size(),
          ErrorCode::kShapeMismatch,
          "wen_objective: X " + shape_str(x.rows(), x.cols()) + ", y " +
              std::to_string(y.size()) + ", beta " + std::to_string(beta.size()));
  require(cfg.weights.size() == beta.size(), ErrorCode::kShapeMismatch,
          "wen_objective: weights length mismatch");
  return (y - x * beta).squaredNorm() + cfg.lambda * penalty(beta, cfg);
}

// eta(t) = eta0 * (eta_final / eta0)^(t / T)
template <typename Scalar>
Scalar lr_schedule(int t, int total, Scalar eta0, Scalar eta_final) {
  require(total > 0, ErrorCode::kInvalidArgument, "lr_schedule: T must be > 0");
  require(t >= 0 && t <= total, ErrorCode::kInvalidArgument,
          "lr_schedule: t outside [0, T]");
  if (t == 0) return eta0;
  if (t == total) return eta_final;
  return eta0 * std::pow(eta_final / eta0, Scalar(t) / Scalar(total));
}

template <typename Scalar>
Scalar sign0(Scalar v) {
  return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

// Several models trained side by side on one shard: row g of `betas` uses
// lambdas(g) and weights.row(g). `rss_scale` multiplies the data term so a
// shard can stand in for the pooled loss (n_S / n_i); 1 reproduces the plain
// shard objective.
template <typename Scalar>
void local_update_batch(Matrix<Scalar>& betas, const Matrix<Scalar>& x,
                        const Vector<Scalar>& y, const Vector<Scalar>& lambdas,
                        const Matrix<Scalar>& weights, Scalar alpha, int epochs,
                        Scalar eta, Scalar rss_scale = Scalar(1)) {
  const Index g = betas.rows();
  require(x.rows() == y.size() && x.cols() == betas.cols() &&
              weights.rows() == g && weights.cols() == betas.cols() &&
              lambdas.size() == g,
          ErrorCode::kShapeMismatch, "local_update: shape mismatch");
  const Vector<Scalar> l1 = alpha * lambdas;
  const Vector<Scalar> l2 = (Scalar(1) - alpha) * lambdas;
  for (int e = 0; e < epochs; ++e) {
    // residuals: n x G
    const Matrix<Scalar> resid =
        y.replicate(1, g) - x * betas.transpose();
    Matrix<Scalar> grad = (Scalar(-2) * rss_scale) * (x.transpose() * resid).transpose();
    grad += (l1.asDiagonal() * weights).cwiseProduct(
        betas.unaryExpr([](Scalar v) { return sign0(v); }));
    grad += (l2.asDiagonal() * weights).cwiseProduct(betas);
    betas -= eta * grad;
  }
}

template <typename Scalar>
Model<Scalar> local_update(const Model<Scalar>& model, const Matrix<Scalar>& x,
                           const Vector<Scalar>& y, const Config<Scalar>& cfg,
                           Scalar eta, Scalar rss_scale = Scalar(1)) {
  require(model.beta.size() == x.cols() && cfg.weights.size() == x.cols() &&
              x.rows() == y.size(),
          ErrorCode::kShapeMismatch, "local_update: shape mismatch");
  Matrix<Scalar> betas = model.beta.transpose();
  local_update_batch<Scalar>(betas, x, y, Vector<Scalar>::Constant(1, cfg.lambda),
                             cfg.weights.transpose(), cfg.alpha, cfg.epochs, eta,
                             rss_scale);
  return {betas.row(0).transpose()};
}

// Share of the pooled sample count held by each shard, n_i / n.
inline std::vector<double> share_weights(const std::vector<Index>& counts) {
  require(!counts.empty(), ErrorCode::kInvalidArgument, "share_weights: no counts");
  const double total = static_cast<double>(
      std::accumulate(counts.begin(), counts.end(), Index{0}));
  require(total > 0, ErrorCode::kInvalidArgument, "share_weights: zero samples");
  std::vector<double> out;
  out.reserve(counts.size());
  for (Index c : counts) out.push_back(static_cast<double>(c) / total);
  return out;
}

// beta = sum_i (n_i / n) beta_i. Written as a sum of pre-scaled terms so it
// can run through secure aggregation; a single shard passes through exactly.
template <typename Scalar>
Model<Scalar> fedavg_round(const std::vector<Model<Scalar>>& models,
                           const std::vector<Index>& counts) {
  require(!models.empty() && models.size() == counts.size(),
          ErrorCode::kInvalidArgument, "fedavg_round: need one count per model");
  const auto shares = share_weights(counts);
  Vector<Scalar> acc = Scalar(shares[0]) * models[0].beta;
  for (std::size_t i = 1; i < models.size(); ++i) {
    require(models[i].beta.size() == acc.size(), ErrorCode::kShapeMismatch,
            "fedavg_round: coefficient length mismatch");
    acc += Scalar(shares[i]) * models[i].beta;
  }
  return {acc};
}

// Secure-sum hook: receives each shard's share-weighted coefficients and
// returns their sum. The default is a plain sum.
template <typename Scalar>
using SumHook =
    std::function<Matrix<Scalar>(int round, const std::vector<Matrix<Scalar>>&)>;

template <typename Scalar>
Matrix<Scalar> plain_sum(int, const std::vector<Matrix<Scalar>>& parts) {
  Matrix<Scalar> total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total += parts[i];
  return total;
}

// A batch of G federated trainings sharing one schedule. Returns G x P.
// `on_round`, when set, observes the global coefficients after each round.
template <typename Scalar>
Matrix<Scalar> train_federated_batch(
    const std::vector<Shard<Scalar>>& shards, const Vector<Scalar>& lambdas,
    const Matrix<Scalar>& weights, const Config<Scalar>& schedule,
    const SumHook<Scalar>& hook = plain_sum<Scalar>,
    const std::function<void(int, const Matrix<Scalar>&)>& on_round = {}) {
  require(!shards.empty(), ErrorCode::kInvalidArgument,
          "train_federated_wen: no shards");
  const Index p = shards.front().x.cols();
  std::vector<Index> counts;
  for (const auto& s : shards) {
    require(s.x.cols() == p && s.x.rows() == s.y.size(), ErrorCode::kShapeMismatch,
            "train_federated_wen: inconsistent shard shapes");
    counts.push_back(s.x.rows());
  }
  const auto shares = share_weights(counts);
  const Index g = lambdas.size();
  Matrix<Scalar> global = Matrix<Scalar>::Zero(g, p);
  std::vector<Matrix<Scalar>> contributions(shards.size());
  for (int t = 0; t < schedule.rounds; ++t) {
    const Scalar eta =
        lr_schedule<Scalar>(t, schedule.rounds, schedule.eta0, schedule.eta_final);
    for (std::size_t i = 0; i < shards.size(); ++i) {
      Matrix<Scalar> local = global;
      local_update_batch<Scalar>(local, shards[i].x, shards[i].y, lambdas, weights,
                                 schedule.alpha, schedule.epochs, eta,
                                 Scalar(1) / Scalar(shares[i]));
      contributions[i] = Scalar(shares[i]) * local;
    }
    global = hook(t, contributions);
    if (on_round) on_round(t, global);
  }
  return global;
}

template <typename Scalar>
Model<Scalar> train_federated_wen(const std::vector<Shard<Scalar>>& shards,
                                  const Config<Scalar>& cfg,
                                  const SumHook<Scalar>& hook = plain_sum<Scalar>) {
  require(!shards.empty(), ErrorCode::kInvalidArgument,
          "train_federated_wen: no shards");
  cfg.validate(shards.front().x.cols());
  const Matrix<Scalar> out = train_federated_batch<Scalar>(
      shards, Vector<Scalar>::Constant(1, cfg.lambda), cfg.weights.transpose(), cfg,
      hook);
  return {out.row(0).transpose()};
}

template <typename Scalar>
Scalar soft_threshold(Scalar v, Scalar threshold) {
  if (v > threshold) return v - threshold;
  if (v < -threshold) return v + threshold;
  return Scalar(0);
}

struct OracleStats {
  int sweeps = 0;
  bool converged = false;
};

// Cyclic coordinate descent with exact coordinate minimisation. `warm`
// optionally seeds the iterate.
template <typename Scalar>
Model<Scalar> centralized_wen_oracle(const Matrix<Scalar>& x, const Vector<Scalar>& y,
                                     const Config<Scalar>& cfg,
                                     const Vector<Scalar>* warm = nullptr,
                                     OracleStats* stats = nullptr) {
  require(x.rows() == y.size(), ErrorCode::kShapeMismatch,
          "centralized_wen_oracle: X/y row mismatch");
  require(cfg.weights.size() == x.cols(), ErrorCode::kShapeMismatch,
          "centralized_wen_oracle: weights length mismatch");
  const Index p = x.cols();
  Vector<Scalar> beta = warm ? *warm : Vector<Scalar>::Zero(p);
  Vector<Scalar> resid = y - x * beta;
  Vector<Scalar> col_sq(p);
  for (Index f = 0; f < p; ++f) col_sq(f) = x.col(f).squaredNorm();
  OracleStats local;
  constexpr int kMaxSweeps = 10000;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    Scalar max_change = 0;
    for (Index f = 0; f < p; ++f) {
      const Scalar old = beta(f);
      const Scalar rho = Scalar(2) * (x.col(f).dot(resid) + col_sq(f) * old);
      const Scalar denom =
          Scalar(2) * col_sq(f) + cfg.lambda * (Scalar(1) - cfg.alpha) * cfg.weights(f);
      const Scalar updated =
          denom > Scalar(0)
              ? soft_threshold(rho, cfg.lambda * cfg.alpha * cfg.weights(f)) / denom
              : Scalar(0);
      if (updated != old) {
        resid -= (updated - old) * x.col(f);
        beta(f) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    local.sweeps = sweep + 1;
    if (max_change <= Scalar(1e-10)) {
      local.converged = true;
      break;
    }
  }
  if (stats) *stats = local;
  return {beta};
}

// Smallest lambda at which beta = 0 is optimal (w_f floored at 0.01), from
// the correlation vector c_f = x_f^T y.
template <typename Scalar>
double lambda_max_from_xty(const Vector<Scalar>& xty, Scalar alpha,
                           const Vector<Scalar>& weights) {
  require(xty.size() == weights.size(), ErrorCode::kShapeMismatch,
          "lambda_max: weights length mismatch");
  require(alpha > Scalar(0), ErrorCode::kInvalidArgument, "lambda_max: alpha must be > 0");
  double lmax = 0;
  for (Index f = 0; f < xty.size(); ++f) {
    const double w = std::max(static_cast<double>(weights(f)), 0.01);
    lmax = std::max(lmax, std::abs(2.0 * static_cast<double>(xty(f))) /
                              (static_cast<double>(alpha) * w));
  }
  require(lmax > 0 && std::isfinite(lmax), ErrorCode::kInvalidArgument,
          "lambda_grid: degenerate data (X^T y = 0)");
  // Nudge up until every (floored) threshold covers its correlation, so the
  // coordinate-descent oracle returns exact zeros at lambda_max.
  for (Index f = 0; f < xty.size(); ++f) {
    const double w = std::max(static_cast<double>(weights(f)), 0.01);
    const double c = std::abs(2.0 * static_cast<double>(xty(f)));
    while (lmax * static_cast<double>(alpha) * w < c) {
      lmax = std::nextafter(lmax, std::numeric_limits<double>::infinity());
    }
  }
  return lmax;
}

inline LambdaGrid geometric_grid(double lambda_max, int size, double ratio) {
  require(size >= 1, ErrorCode::kInvalidArgument, "lambda_grid: size must be >= 1");
  require(ratio > 0 && ratio < 1, ErrorCode::kInvalidArgument,
          "lambda_grid: ratio must be in (0, 1)");
  LambdaGrid grid;
  grid.values.reserve(static_cast<std::size_t>(size));
  for (int g = 0; g < size; ++g) {
    grid.values.push_back(
        g == 0 ? lambda_max
               : lambda_max * std::pow(ratio, static_cast<double>(g) / (size - 1)));
  }
  return grid;
}

template <typename Scalar>
LambdaGrid lambda_grid(const Matrix<Scalar>& x, const Vector<Scalar>& y,
                       const Config<Scalar>& cfg, int size = 20, double ratio = 1e-4) {
  require(x.rows() == y.size(), ErrorCode::kShapeMismatch, "lambda_grid: X/y mismatch");
  require(!x.isZero(0), ErrorCode::kInvalidArgument, "lambda_grid: X is all zero");
  Vector<Scalar> xty(x.cols());
  // Column dot products, matching how the oracle forms its first update.
  for (Index f = 0; f < x.cols(); ++f) xty(f) = x.col(f).dot(y);
  return geometric_grid(lambda_max_from_xty(xty, cfg.alpha, cfg.weights), size, ratio);
}

template <typename Scalar>
Vector<Scalar> predict(const Model<Scalar>& model, const Matrix<Scalar>& x) {
  require(x.cols() == model.beta.size(), ErrorCode::kShapeMismatch,
          "predict: feature count mismatch");
  return x * model.beta;
}

template <typename Scalar>
Scalar mae(const Vector<Scalar>& pred, const Vector<Scalar>& truth) {
  require(pred.size() == truth.size() && pred.size() > 0, ErrorCode::kShapeMismatch,
          "mae: length mismatch");
  return (pred - truth).cwiseAbs().mean();
}

template <typename Scalar>
struct EnLsResult {
  Model<Scalar> model;
  double lambda = 0;
  bool refit = false;  // false: empty support, elastic-net model returned as is
  std::vector<Index> support;
};

// Cross-validated elastic net (all weights 1) followed by a least-squares
// refit on the selected support.
template <typename Scalar>
EnLsResult<Scalar> en_ls_baseline(const Matrix<Scalar>& x, const Vector<Scalar>& y,
                                  Scalar alpha, int folds, std::uint64_t seed,
                                  int grid_size = 20, double grid_ratio = 1e-4) {
  const Index n = x.rows();
  const Index p = x.cols();
  require(folds >= 2 && n >= folds, ErrorCode::kInvalidArgument,
          "en_ls_baseline: need n >= folds >= 2");
  Config<Scalar> cfg;
  cfg.alpha = alpha;
  cfg.weights = Vector<Scalar>::Ones(p);
  const LambdaGrid grid = lambda_grid(x, y, cfg, grid_size, grid_ratio);

  // Seeded fold assignment: shuffled indices dealt round-robin.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Prng prng(derive_seed(seed, "en-ls-folds"));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(prng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % folds);

  std::vector<Scalar> cv_error(grid.values.size(), Scalar(0));
  for (int k = 0; k < folds; ++k) {
    std::vector<Index> tr, va;
    for (Index i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == k ? va : tr).push_back(i);
    const Matrix<Scalar> xtr = x(tr, Eigen::all);
    const Vector<Scalar> ytr = y(tr);
    const Matrix<Scalar> xva = x(va, Eigen::all);
    const Vector<Scalar> yva = y(va);
    Vector<Scalar> warm = Vector<Scalar>::Zero(p);
    for (std::size_t g = 0; g < grid.values.size(); ++g) {
      cfg.lambda = Scalar(grid.values[g]);
      warm = centralized_wen_oracle(xtr, ytr, cfg, &warm).beta;
      cv_error[g] += (yva - xva * warm).squaredNorm();
    }
  }
  // Grid is decreasing, so keeping the first minimum prefers the larger lambda.
  std::size_t best = 0;
  for (std::size_t g = 1; g < cv_error.size(); ++g)
    if (cv_error[g] < cv_error[best]) best = g;

  EnLsResult<Scalar> out;
  out.lambda = grid.values[best];
  cfg.lambda = Scalar(out.lambda);
  const Model<Scalar> en = centralized_wen_oracle(x, y, cfg);
  for (Index f = 0; f < p; ++f)
    if (en.beta(f) != Scalar(0)) out.support.push_back(f);
  if (out.support.empty()) {
    out.model = en;
    return out;
  }
  const Matrix<Scalar> xs = x(Eigen::all, out.support);
  const Vector<Scalar> coef = xs.colPivHouseholderQr().solve(y);
  out.model.beta = Vector<Scalar>::Zero(p);
  for (std::size_t i = 0; i < out.support.size(); ++i)
    out.model.beta(out.support[i]) = coef(static_cast<Index>(i));
  out.refit = true;
  return out;
}

}  // namespace freda::wen
