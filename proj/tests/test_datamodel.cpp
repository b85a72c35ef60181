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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "freda/datamodel.hpp"
#include "freda/gpr.hpp"
#include "freda/rng.hpp"

using namespace freda;
using namespace freda::data;

namespace {

Dataset random_dataset(Index n, Index p, std::uint64_t seed, int domains = 1) {
  Prng prng(seed);
  Dataset ds;
  ds.features = prng.normal_matrix(n, p);
  ds.labels = VectorXd(prng.normal_matrix(n, 1).col(0));
  for (Index i = 0; i < n; ++i) ds.domain_ids.push_back(static_cast<int>(i % domains));
  ds.feature_names = default_feature_names(p);
  return ds;
}

std::multiset<std::vector<double>> row_multiset(const Dataset& ds) {
  std::multiset<std::vector<double>> out;
  for (Index i = 0; i < ds.rows(); ++i) {
    std::vector<double> row;
    for (Index j = 0; j < ds.cols(); ++j) row.push_back(ds.features(i, j));
    row.push_back((*ds.labels)(i));
    out.insert(row);
  }
  return out;
}

}  // namespace

TEST(Dataset, ValidateCatchesBrokenInvariants) {
  Dataset ok = random_dataset(6, 3, 1, 2);
  EXPECT_NO_THROW(ok.validate());

  Dataset one_col = random_dataset(6, 1, 1);
  EXPECT_THROW(one_col.validate(), Error);

  Dataset bad_labels = ok;
  bad_labels.labels = VectorXd::Zero(5);
  EXPECT_THROW(bad_labels.validate(), Error);

  Dataset gap = ok;
  gap.domain_ids = {0, 2, 0, 2, 0, 2};
  EXPECT_THROW(gap.validate(), Error);

  Dataset nan = ok;
  nan.features(0, 0) = std::nan("");
  EXPECT_THROW(nan.validate(), Error);
}

TEST(AgeTransform, SpecExamples) {
  EXPECT_EQ(age_transform(20.0), 0.0);
  EXPECT_DOUBLE_EQ(age_transform(41.0), 1.0);
  // -ln 21 to 20 digits: 3.0445224377234229965
  EXPECT_NEAR(age_transform(0.0), -3.0445224377234229965, 1e-15);
  EXPECT_THROW(age_transform(-0.5), Error);
  EXPECT_THROW(age_transform(1.0, {0.0}), Error);
}

TEST(AgeTransform, InverseExamples) {
  EXPECT_DOUBLE_EQ(age_transform_inverse(0.0), 20.0);
  EXPECT_DOUBLE_EQ(age_transform_inverse(1.0), 41.0);
  EXPECT_NEAR(age_transform_inverse(-std::log(21.0)), 0.0, 1e-10);
}

TEST(AgeTransform, RoundTripMonotoneContinuous) {
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 12000; ++i) {
    const double y = i * 0.01;
    const double z = age_transform(y);
    EXPECT_GT(z, prev);
    prev = z;
    EXPECT_NEAR(age_transform_inverse(z), y, 1e-10) << y;
  }
  for (double a : {5.0, 20.0, 33.3}) {
    const double eps = 1e-9;
    EXPECT_NEAR(age_transform(a - eps, {a}), age_transform(a + eps, {a}), 1e-8);
  }
}

TEST(Stats, SpecExamples) {
  MatrixXd m(2, 1);
  m << 1, 3;
  const auto s = local_stats(m);
  EXPECT_EQ(s.count, 2);
  EXPECT_EQ(s.sum(0), 4.0);
  EXPECT_EQ(s.sum_sq(0), 10.0);

  const auto z = local_stats(MatrixXd(MatrixXd::Zero(4, 3)));
  EXPECT_TRUE(z.sum.isZero(0));
  EXPECT_TRUE(z.sum_sq.isZero(0));
  EXPECT_THROW(local_stats(MatrixXd(0, 3)), Error);
}

TEST(Stats, MatchesDirectLoop) {
  Prng prng(11);
  const MatrixXd m = prng.normal_matrix(5, 3);
  const auto s = local_stats(m);
  for (Index j = 0; j < 3; ++j) {
    double sum = 0, sq = 0;
    for (Index i = 0; i < 5; ++i) {
      sum += m(i, j);
      sq += m(i, j) * m(i, j);
    }
    EXPECT_NEAR(s.sum(j), sum, 1e-14);
    EXPECT_NEAR(s.sum_sq(j), sq, 1e-14);
  }
}

TEST(Stats, MergeProperties) {
  // identical shards with mean 0, var 1
  VectorXd v(10);
  v << 1, -1, 1, -1, 1, -1, 1, -1, 1, -1;
  const auto a = local_stats(v);
  const auto pooled = merge_stats({a, a});
  EXPECT_NEAR(pooled.mean()(0), 0.0, 1e-15);
  EXPECT_NEAR(pooled.variance()(0), 1.0, 1e-15);

  const auto same = merge_stats({a, FeatureStats{}});
  EXPECT_EQ(same.count, a.count);
  EXPECT_EQ(same.sum, a.sum);

  Prng prng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(prng.below(40));
    const Index cut = 1 + static_cast<Index>(prng.below(static_cast<std::uint64_t>(n - 1)));
    const MatrixXd m = prng.normal_matrix(n, 4) * 3.0;
    const auto whole = local_stats(m);
    const auto left = local_stats(MatrixXd(m.topRows(cut)));
    const auto right = local_stats(MatrixXd(m.bottomRows(n - cut)));
    const auto merged = merge_stats({left, right});
    const auto swapped = merge_stats({right, left});
    EXPECT_EQ(merged.count, whole.count);
    EXPECT_LE((merged.sum - whole.sum).cwiseAbs().maxCoeff(),
              1e-9 * std::max(1.0, whole.sum.cwiseAbs().maxCoeff()));
    EXPECT_LE((merged.sum_sq - whole.sum_sq).cwiseAbs().maxCoeff(), 1e-9 * whole.sum_sq.maxCoeff());
    EXPECT_EQ(merged.sum, swapped.sum);
  }
  FeatureStats wrong = local_stats(MatrixXd(MatrixXd::Ones(2, 2)));
  EXPECT_THROW(merge_stats({a, wrong}), Error);
}

TEST(Standardize, MomentsAndIdempotence) {
  Prng prng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset ds = random_dataset(30, 4, 100 + trial);
    ds.features = ds.features * 7.0 + MatrixXd::Constant(30, 4, 3.0);
    const auto z = standardize(ds, local_stats(ds.features));
    const auto s = local_stats(z.features);
    EXPECT_LE(s.mean().cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((s.variance().array() - 1.0).abs().maxCoeff(), 1e-8);
    const auto again = standardize(z, local_stats(z.features));
    EXPECT_LE((again.features - z.features).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Standardize, ConstantColumnReportedByIndex) {
  Dataset ds = random_dataset(8, 3, 2);
  ds.features.col(1).setConstant(4.0);
  const auto stats = local_stats(ds.features);
  try {
    standardize(ds, stats);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  EXPECT_EQ(zero_variance_columns(stats), std::vector<Index>{1});
  const auto kept = drop_columns(ds, {1});
  EXPECT_EQ(kept.cols(), 2);
  EXPECT_NO_THROW(standardize(kept, drop_stat_columns(stats, {1})));
}

TEST(Standardize, ValuesRoundTrip) {
  VectorXd y(4);
  y << 3, 8, 1, 12;
  const auto s = local_stats(y);
  const VectorXd z = standardize_values(y, s);
  EXPECT_LE((destandardize_values(z, s) - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Partition, SpecExamples) {
  const Dataset big = random_dataset(1866, 2, 9);
  const auto two = partition_uniform(big, 2, 1);
  EXPECT_EQ(two[0].rows(), 933);
  EXPECT_EQ(two[1].rows(), 933);

  const Dataset ten = random_dataset(10, 3, 10, 3);
  const auto one = partition_uniform(ten, 1, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].features, ten.features);
  EXPECT_EQ(one[0].domain_ids, ten.domain_ids);

  const auto four = partition_uniform(ten, 4, 77);
  std::vector<Index> sizes;
  for (const auto& s : four) sizes.push_back(s.rows());
  EXPECT_EQ(sizes, (std::vector<Index>{3, 3, 2, 2}));
  EXPECT_EQ(row_multiset(concat_rows(four)), row_multiset(ten));

  EXPECT_THROW(partition_uniform(ten, 0, 1), Error);
  EXPECT_THROW(partition_uniform(ten, 11, 1), Error);
}

TEST(Partition, PropertiesOverRandomShapes) {
  Prng prng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 1 + static_cast<Index>(prng.below(60));
    const int k = 1 + static_cast<int>(prng.below(static_cast<std::uint64_t>(std::min<Index>(n, 9))));
    const auto seed = prng.next_u64();
    const Dataset ds = random_dataset(n, 2, seed, 1);
    const auto parts = partition_uniform(ds, k, seed);
    const auto again = partition_uniform(ds, k, seed);
    Index lo = n, hi = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      lo = std::min(lo, parts[i].rows());
      hi = std::max(hi, parts[i].rows());
      EXPECT_EQ(parts[i].features, again[i].features);
    }
    EXPECT_LE(hi - lo, 1);
    EXPECT_EQ(row_multiset(concat_rows(parts)), row_multiset(ds));
  }
}

TEST(Synthetic, ShapesAndDeterminism) {
  SyntheticConfig cfg;
  cfg.seed = 42;
  cfg.n_clients = 2;
  const auto a = gen_synthetic(cfg);
  const auto b = gen_synthetic(cfg);
  ASSERT_EQ(a.source_shards.size(), 2u);
  EXPECT_EQ(a.source_shards[0].rows(), 100);
  EXPECT_EQ(a.source_shards[1].rows(), 100);
  EXPECT_EQ(a.target.domain_count(), cfg.n_target_domains);
  EXPECT_EQ(a.target.rows(), cfg.n_target * cfg.n_target_domains);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.source_shards[i].features, b.source_shards[i].features);
    EXPECT_EQ(*a.source_shards[i].labels, *b.source_shards[i].labels);
  }
  EXPECT_EQ(a.target.features, b.target.features);
  ASSERT_EQ(a.similarities.size(), 2u);
  EXPECT_EQ(a.similarities[0], 1.0);
  EXPECT_NEAR(a.similarities[1], 0.2, 1e-15);
  EXPECT_EQ((a.beta.array() != 0.0).count(), cfg.support_size);

  std::set<Index> shifted(a.shifted_features.begin(), a.shifted_features.end());
  EXPECT_EQ(static_cast<Index>(shifted.size()), cfg.n_shifted);
  for (Index f : shifted) EXPECT_LT(f, cfg.p);
}

TEST(Synthetic, InvalidConfigRejected) {
  SyntheticConfig cfg;
  cfg.support_size = cfg.p + 1;
  EXPECT_THROW(gen_synthetic(cfg), Error);
  cfg = SyntheticConfig{};
  cfg.shift_strength = {0.0, 1.5};
  EXPECT_THROW(gen_synthetic(cfg), Error);
  cfg = SyntheticConfig{};
  cfg.n_clients = 0;
  EXPECT_THROW(gen_synthetic(cfg), Error);
}

TEST(Synthetic, FullShiftBreaksFeatureModels) {
  SyntheticConfig cfg;
  cfg.seed = 8;
  cfg.n_clients = 1;
  cfg.n_target_domains = 1;
  cfg.shift_strength = {1.0};
  cfg.n_target = 500;  // sampling sd of a null correlation ~0.045
  const auto syn = gen_synthetic(cfg);
  const auto stats = local_stats(syn.source_shards[0].features);
  const MatrixXd xs = standardize(syn.source_shards[0], stats).features;
  const MatrixXd xt = standardize(syn.target, stats).features;
  for (Index f : syn.shifted_features) {
    std::vector<Index> rest;
    for (Index j = 0; j < cfg.p; ++j)
      if (j != f) rest.push_back(j);
    const MatrixXd a = xs(Eigen::all, rest);
    const MatrixXd b = xt(Eigen::all, rest);
    const auto pred = gpr::gpr_posterior(a, VectorXd(xs.col(f)), b, gpr::HyperParams<double>{});
    const VectorXd obs = xt.col(f);
    const double corr = ((obs.array() - obs.mean()) * (pred.mean.array() - pred.mean.mean())).sum() /
                        std::sqrt((obs.array() - obs.mean()).square().sum() *
                                  (pred.mean.array() - pred.mean.mean()).square().sum());
    EXPECT_LE(corr, 0.2) << "feature " << f;
  }
}

TEST(Csv, RoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "freda_test_csv";
  std::filesystem::create_directories(dir);
  Dataset ds = random_dataset(7, 3, 4, 2);
  ds.features(0, 0) = 0.1;
  ds.features(1, 1) = 1e-300;
  ds.features(2, 2) = -123456789.123456789;
  write_csv(dir / "a.csv", ds);
  const Dataset back = read_csv(dir / "a.csv");
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(*back.labels, *ds.labels);
  EXPECT_EQ(back.domain_ids, ds.domain_ids);
  EXPECT_EQ(back.feature_names, ds.feature_names);

  Dataset unlabelled = ds;
  unlabelled.labels.reset();
  write_csv(dir / "b.csv", unlabelled);
  EXPECT_FALSE(read_csv(dir / "b.csv").has_labels());

  std::ofstream(dir / "bad.csv") << "domain_id,f0,f1\n0,1.0,abc\n";
  EXPECT_THROW(read_csv(dir / "bad.csv"), Error);
  EXPECT_THROW(read_csv(dir / "missing.csv"), Error);
}
