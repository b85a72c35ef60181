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

#include "freda/privacy.hpp"

#include <algorithm>
#include <cmath>

#include "freda/rng.hpp"

namespace freda::privacy {

GramBlocks::GramBlocks(MatrixXd full, std::vector<Index> sizes, bool has_target)
    : full_(std::move(full)), sizes_(std::move(sizes)), has_target_(has_target) {
  offsets_.reserve(sizes_.size());
  Index off = 0;
  for (Index s : sizes_) {
    offsets_.push_back(off);
    off += s;
  }
  require(off == full_.rows() && full_.rows() == full_.cols(),
          ErrorCode::kShapeMismatch, "GramBlocks: sizes do not match Gram matrix");
}

Index GramBlocks::source_rows() const {
  return full_.rows() - target_rows();
}

Index GramBlocks::target_rows() const {
  return has_target_ ? sizes_.back() : 0;
}

MatrixXd GramBlocks::block(Index p, Index q) const {
  require(p >= 0 && q >= 0 && p < parts() && q < parts(),
          ErrorCode::kInvalidArgument, "GramBlocks::block: part out of range");
  return full_.block(offsets_[p], offsets_[q], sizes_[p], sizes_[q]);
}

MatrixXd GramBlocks::g_ss() const {
  const Index ns = source_rows();
  return full_.topLeftCorner(ns, ns);
}

MatrixXd GramBlocks::g_st() const {
  return full_.topRightCorner(source_rows(), target_rows());
}

MatrixXd GramBlocks::g_tt() const {
  const Index nt = target_rows();
  return full_.bottomRightCorner(nt, nt);
}

MaskBasis gen_mask_basis(std::uint64_t seed, Index p, Index d) {
  require(p >= 1 && d > p, ErrorCode::kInvalidArgument,
          "gen_mask_basis: need d > P >= 1, got d=" + std::to_string(d) +
              " P=" + std::to_string(p));
  for (int attempt = 0; attempt < kMaxMaskAttempts; ++attempt) {
    Prng prng(derive_seed(seed, "mask-basis", static_cast<std::uint64_t>(attempt)));
    MaskBasis b{prng.normal_matrix(d, p), seed, attempt};
    Eigen::ColPivHouseholderQR<MatrixXd> qr(b.m);
    if (qr.rank() == p) return b;
  }
  fail(ErrorCode::kRankDeficient, "gen_mask_basis: no full-rank basis after " +
                                      std::to_string(kMaxMaskAttempts) + " attempts");
}

MatrixXd left_inverse(const MaskBasis& basis) {
  const MatrixXd& m = basis.m;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
  require(qr.rank() == m.cols(), ErrorCode::kRankDeficient,
          "left_inverse: basis is not full column rank");
  const MatrixXd mtm = m.transpose() * m;
  Eigen::LLT<MatrixXd> llt(mtm);
  require(llt.info() == Eigen::Success, ErrorCode::kRankDeficient,
          "left_inverse: M^T M not positive definite");
  return llt.solve(m.transpose());
}

MatrixXd masking_transform(const MaskBasis& basis) {
  const MatrixXd mmt = basis.m * basis.m.transpose();
  return left_inverse(basis) * psd_sqrt(mmt);
}

GramBlocks gram_from_masked(const std::vector<MaskedMatrix>& sources,
                            const MaskedMatrix* target) {
  require(!sources.empty(), ErrorCode::kInvalidArgument,
          "gram_from_masked: no source parts");
  const Index d = sources.front().rows.cols();
  std::vector<Index> sizes;
  Index total = 0;
  auto add = [&](const MaskedMatrix& part) {
    require(part.rows.cols() == d, ErrorCode::kShapeMismatch,
            "gram_from_masked: mismatched lifted dimension " +
                std::to_string(part.rows.cols()) + " vs " + std::to_string(d));
    sizes.push_back(part.rows.rows());
    total += part.rows.rows();
  };
  for (const auto& s : sources) add(s);
  if (target != nullptr) add(*target);

  MatrixXd stacked(total, d);
  Index off = 0;
  for (const auto& s : sources) {
    stacked.middleRows(off, s.rows.rows()) = s.rows;
    off += s.rows.rows();
  }
  if (target != nullptr) stacked.middleRows(off, target->rows.rows()) = target->rows;
  MatrixXd full = stacked * stacked.transpose();
  // Gram blocks are exactly symmetric by contract.
  full = (0.5 * (full + full.transpose())).eval();
  return GramBlocks(std::move(full), std::move(sizes), target != nullptr);
}

namespace {

MatrixXd pair_stream(std::uint64_t pair_seed, Index rows, Index cols,
                     std::uint64_t nonce) {
  Prng prng(derive_seed(pair_seed, "zero-sum", nonce));
  const auto steps = static_cast<std::uint64_t>(kZeroSumBound / kZeroSumQuantum);
  MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const auto k = static_cast<std::int64_t>(prng.below(2 * steps + 1)) -
                     static_cast<std::int64_t>(steps);
      out(i, j) = static_cast<double>(k) * kZeroSumQuantum;
    }
  }
  return out;
}

}  // namespace

MatrixXd zero_sum_mask(int party, const std::vector<int>& party_ids,
                       const PairSeeds& seeds, Index rows, Index cols,
                       std::uint64_t nonce) {
  MatrixXd mask = MatrixXd::Zero(rows, cols);
  for (int other : party_ids) {
    if (other == party) continue;
    const auto key = std::minmax(party, other);
    const auto it = seeds.find({key.first, key.second});
    require(it != seeds.end(), ErrorCode::kInvalidArgument,
            "zero_sum_mask: missing seed for pair (" + std::to_string(key.first) +
                "," + std::to_string(key.second) + ")");
    const MatrixXd stream = pair_stream(it->second, rows, cols, nonce);
    if (other > party) {
      mask += stream;
    } else {
      mask -= stream;
    }
  }
  return mask;
}

ZeroSumMaskSet make_zero_sum_masks(const std::vector<int>& party_ids,
                                   const PairSeeds& seeds, Index rows,
                                   Index cols, std::uint64_t nonce) {
  ZeroSumMaskSet set;
  set.party_ids = party_ids;
  set.masks.reserve(party_ids.size());
  for (int id : party_ids) {
    set.masks.push_back(zero_sum_mask(id, party_ids, seeds, rows, cols, nonce));
  }
  return set;
}

EncodingMask gen_encoding_mask(std::uint64_t seed, Index n_t) {
  require(n_t >= 1, ErrorCode::kInvalidArgument, "gen_encoding_mask: n_t < 1");
  for (int attempt = 0; attempt < kMaxMaskAttempts; ++attempt) {
    Prng prng(derive_seed(seed, "encoding-mask", static_cast<std::uint64_t>(attempt)));
    MatrixXd c = prng.normal_matrix(n_t, n_t);
    Eigen::BDCSVD<MatrixXd> svd(c);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || sv(0) / smin > kMaxConditionNumber) continue;
    MatrixXd c_inv = c.partialPivLu().inverse();
    const double err =
        (c * c_inv - MatrixXd::Identity(n_t, n_t)).cwiseAbs().maxCoeff();
    if (err > 1e-8) continue;
    return {std::move(c), std::move(c_inv), seed, attempt};
  }
  fail(ErrorCode::kFactorization,
       "gen_encoding_mask: no well-conditioned mask after " +
           std::to_string(kMaxMaskAttempts) + " attempts");
}

}  // namespace freda::privacy
