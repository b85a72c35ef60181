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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freda/common.hpp"

namespace freda::data {

struct Dataset {
  MatrixXd features;               // n x P
  std::optional<VectorXd> labels;  // n
  std::vector<int> domain_ids;     // n, values in 0..L-1
  std::vector<std::string> feature_names;

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }

  // Number of distinct domains (max id + 1); 0 for an empty set.
  int domain_count() const;
  std::vector<Index> rows_of_domain(int domain) const;

  // Throws on any broken invariant.
  void validate() const;
};

std::vector<std::string> default_feature_names(Index p);

Dataset select_rows(const Dataset& ds, const std::vector<Index>& rows);
Dataset drop_columns(const Dataset& ds, const std::vector<Index>& columns);
Dataset concat_rows(const std::vector<Dataset>& parts);

struct AgeTransformParams {
  double y_adult = 20.0;
};

double age_transform(double y, const AgeTransformParams& params = {});
double age_transform_inverse(double z, const AgeTransformParams& params = {});
VectorXd age_transform(const VectorXd& y, const AgeTransformParams& params = {});
VectorXd age_transform_inverse(const VectorXd& z, const AgeTransformParams& params = {});

// Column sums; mean and population variance derive from them.
struct FeatureStats {
  std::int64_t count = 0;
  VectorXd sum;
  VectorXd sum_sq;

  Index dim() const { return sum.size(); }
  VectorXd mean() const;
  VectorXd variance() const;  // population (divide by count), clamped at 0
  VectorXd sd() const;
};

FeatureStats local_stats(const MatrixXd& features);
FeatureStats local_stats(const VectorXd& values);
// Empty parts (count 0, no columns) act as the identity.
FeatureStats merge_stats(const std::vector<FeatureStats>& parts);

inline constexpr double kZeroVariance = 1e-12;

std::vector<Index> zero_variance_columns(const FeatureStats& stats);
FeatureStats drop_stat_columns(const FeatureStats& stats, const std::vector<Index>& columns);

// (x - mean) / sd per column. Labels are left alone.
Dataset standardize(const Dataset& ds, const FeatureStats& stats);
VectorXd standardize_values(const VectorXd& v, const FeatureStats& stats);
VectorXd destandardize_values(const VectorXd& z, const FeatureStats& stats);

std::vector<Dataset> partition_uniform(const Dataset& ds, int n_clients,
                                       std::uint64_t seed);

struct SyntheticConfig {
  Index n_source_total = 200;
  Index n_target = 60;  // samples per target domain
  Index p = 30;
  int n_clients = 2;
  int n_target_domains = 2;
  std::vector<double> shift_strength{0.0, 0.8};
  double noise_sd = 0.5;
  Index support_size = 6;
  std::uint64_t seed = 0;
  // Covariance structure: x = z F^T + latent_noise * e, z in R^rank.
  Index rank = 2;
  double latent_noise = 0.8;
  Index n_shifted = 8;

  void validate() const;
};

struct SyntheticData {
  std::vector<Dataset> source_shards;
  Dataset target;
  std::vector<double> similarities;  // 1 - shift per target domain
  VectorXd beta;                      // planted coefficients
  std::vector<Index> shifted_features;
};

SyntheticData gen_synthetic(const SyntheticConfig& config);

// CSV layout: domain_id[,label],<features...> with a header row.
void write_csv(const std::filesystem::path& path, const Dataset& ds);
Dataset read_csv(const std::filesystem::path& path);
// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace freda::data
