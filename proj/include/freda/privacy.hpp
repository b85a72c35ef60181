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

// Semi-honest privacy primitives:
//
//  * FLAKE-style lifting. Data holders share a basis M (d x P, d > P) that
//    the aggregator never sees. Client data x (n x P) is sent as
//    x' = x L (M M^T)^{1/2} with L M = I_P, so x'_p x'_q^T = x_p x_q^T while
//    the rows themselves live in R^d.
//  * Zero-sum masking for secure aggregation: pairwise PRG streams added
//    with opposite signs so only the total is revealed.
//  * Randomised encoding with an invertible C hiding K_* K^{-1}.

#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "freda/common.hpp"

namespace freda::privacy {

struct MaskBasis {
  MatrixXd m;  // d x P
  std::uint64_t seed = 0;
  int retries = 0;  // regenerations needed to reach full column rank

  Index lifted_dim() const { return m.rows(); }
  Index feature_dim() const { return m.cols(); }
};

struct MaskedMatrix {
  MatrixXd rows;  // n x d
  int owner = -1;
};

// Pairwise Gram products recovered from masked matrices. Parts are ordered
// sources first (client order), then the target.
class GramBlocks {
 public:
  GramBlocks(MatrixXd full, std::vector<Index> sizes, bool has_target);

  Index parts() const { return static_cast<Index>(sizes_.size()); }
  Index part_size(Index p) const { return sizes_[p]; }
  Index source_rows() const;
  Index target_rows() const;

  // block(p, q) = X_p X_q^T
  MatrixXd block(Index p, Index q) const;
  MatrixXd g_ss() const;  // n_S x n_S
  MatrixXd g_st() const;  // n_S x n_t
  MatrixXd g_tt() const;  // n_t x n_t
  const MatrixXd& full() const { return full_; }

 private:
  MatrixXd full_;
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
  bool has_target_;
};

struct EncodingMask {
  MatrixXd c;
  MatrixXd c_inv;
  std::uint64_t seed = 0;
  int regenerations = 0;
};

inline constexpr double kZeroSumBound = 1e3;
// Zero-sum draws are multiples of 2^-20; with |v| <= 1e3 every partial sum
// over a few thousand parties is exact in double precision.
inline constexpr double kZeroSumQuantum = 0x1.0p-20;
inline constexpr double kMaxConditionNumber = 1e6;
inline constexpr int kMaxMaskAttempts = 16;

// Unordered party pair -> shared seed. Keys are stored with first < second.
using PairSeeds = std::map<std::pair<int, int>, std::uint64_t>;

struct ZeroSumMaskSet {
  std::vector<int> party_ids;
  std::vector<MatrixXd> masks;  // masks[i] belongs to party_ids[i]
};

MaskBasis gen_mask_basis(std::uint64_t seed, Index p, Index d);

// Moore-Penrose left inverse (M^T M)^{-1} M^T, P x d.
MatrixXd left_inverse(const MaskBasis& basis);

// Symmetric square root of a symmetric PSD matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> psd_sqrt(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  require(a.rows() == a.cols(), ErrorCode::kShapeMismatch,
          "psd_sqrt: matrix must be square");
  const Scalar scale = std::max(Scalar(1), a.cwiseAbs().maxCoeff());
  require((a - a.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-9) * scale,
          ErrorCode::kInvalidArgument, "psd_sqrt: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(a);
  Vector<Scalar> ev = es.eigenvalues();
  require(ev.minCoeff() >= Scalar(-1e-9) * scale, ErrorCode::kInvalidArgument,
          "psd_sqrt: matrix has a negative eigenvalue");
  ev = ev.cwiseMax(Scalar(0)).cwiseSqrt();
  Matrix<Scalar> s = es.eigenvectors() * ev.asDiagonal() *
                     es.eigenvectors().transpose();
  return Scalar(0.5) * (s + s.transpose());
}

// L (M M^T)^{1/2}: the P x d map a client applies to its rows.
MatrixXd masking_transform(const MaskBasis& basis);

template <typename DerivedX, typename DerivedL, typename DerivedS>
MaskedMatrix mask_data(const Eigen::MatrixBase<DerivedX>& x,
                       const Eigen::MatrixBase<DerivedL>& l,
                       const Eigen::MatrixBase<DerivedS>& s, int owner = -1) {
  require(x.cols() == l.rows() && l.cols() == s.rows() && s.rows() == s.cols(),
          ErrorCode::kShapeMismatch,
          "mask_data: X " + shape_str(x.rows(), x.cols()) + ", L " +
              shape_str(l.rows(), l.cols()) + ", S " +
              shape_str(s.rows(), s.cols()));
  return {x * (l * s), owner};
}

// Sources first, in client order; the target (if any) last.
GramBlocks gram_from_masked(const std::vector<MaskedMatrix>& sources,
                            const MaskedMatrix* target);

// The mask one party adds: sum over j > i of PRG(seed_ij) minus sum over
// j < i. `nonce` separates independent aggregation rounds.
MatrixXd zero_sum_mask(int party, const std::vector<int>& party_ids,
                       const PairSeeds& seeds, Index rows, Index cols,
                       std::uint64_t nonce);

ZeroSumMaskSet make_zero_sum_masks(const std::vector<int>& party_ids,
                                   const PairSeeds& seeds, Index rows,
                                   Index cols, std::uint64_t nonce);

template <typename Scalar>
Matrix<Scalar> secure_sum(const std::vector<Matrix<Scalar>>& masked_values) {
  require(!masked_values.empty(), ErrorCode::kInvalidArgument,
          "secure_sum: no values");
  Matrix<Scalar> total = masked_values.front();
  for (std::size_t i = 1; i < masked_values.size(); ++i) {
    require(masked_values[i].rows() == total.rows() &&
                masked_values[i].cols() == total.cols(),
            ErrorCode::kShapeMismatch, "secure_sum: shape mismatch");
    total += masked_values[i];
  }
  return total;
}

EncodingMask gen_encoding_mask(std::uint64_t seed, Index n_t);

template <typename Derived>
std::vector<Matrix<typename Derived::Scalar>> split_columns(
    const Eigen::MatrixBase<Derived>& a, const std::vector<Index>& counts) {
  Index total = 0;
  for (Index c : counts) {
    require(c >= 0, ErrorCode::kInvalidArgument, "split_columns: negative count");
    total += c;
  }
  require(total == a.cols(), ErrorCode::kShapeMismatch,
          "split_columns: counts sum to " + std::to_string(total) + ", matrix has " +
              std::to_string(a.cols()) + " columns");
  std::vector<Matrix<typename Derived::Scalar>> out;
  out.reserve(counts.size());
  Index offset = 0;
  for (Index c : counts) {
    out.emplace_back(a.middleCols(offset, c));
    offset += c;
  }
  return out;
}

}  // namespace freda::privacy
