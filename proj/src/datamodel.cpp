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

#include "freda/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "freda/rng.hpp"

namespace freda::data {

int Dataset::domain_count() const {
  if (domain_ids.empty()) return 0;
  return *std::max_element(domain_ids.begin(), domain_ids.end()) + 1;
}

std::vector<Index> Dataset::rows_of_domain(int domain) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < domain_ids.size(); ++i)
    if (domain_ids[i] == domain) out.push_back(static_cast<Index>(i));
  return out;
}

void Dataset::validate() const {
  const Index n = features.rows();
  require(features.cols() >= 2, ErrorCode::kInvalidArgument,
          "Dataset: need at least 2 features, got " + std::to_string(features.cols()));
  require(!labels || labels->size() == n, ErrorCode::kShapeMismatch,
          "Dataset: labels length " + std::to_string(labels ? labels->size() : 0) +
              " does not match " + std::to_string(n) + " rows");
  require(static_cast<Index>(domain_ids.size()) == n, ErrorCode::kShapeMismatch,
          "Dataset: domain_ids length " + std::to_string(domain_ids.size()) +
              " does not match " + std::to_string(n) + " rows");
  require(static_cast<Index>(feature_names.size()) == features.cols(),
          ErrorCode::kShapeMismatch, "Dataset: feature_names length mismatch");
  require(features.allFinite() && (!labels || labels->allFinite()),
          ErrorCode::kInvalidArgument, "Dataset: non-finite value");
  if (domain_ids.empty()) return;
  std::set<int> seen(domain_ids.begin(), domain_ids.end());
  require(*seen.begin() >= 0, ErrorCode::kInvalidArgument,
          "Dataset: negative domain id");
  // Contiguous 0..L-1.
  require(static_cast<int>(seen.size()) == *seen.rbegin() + 1,
          ErrorCode::kInvalidArgument, "Dataset: domain ids are not contiguous from 0");
}

std::vector<std::string> default_feature_names(Index p) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

Dataset select_rows(const Dataset& ds, const std::vector<Index>& rows) {
  Dataset out;
  out.features = ds.features(rows, Eigen::all);
  if (ds.labels) out.labels = VectorXd((*ds.labels)(rows));
  out.domain_ids.reserve(rows.size());
  for (Index r : rows) out.domain_ids.push_back(ds.domain_ids[static_cast<std::size_t>(r)]);
  out.feature_names = ds.feature_names;
  return out;
}

Dataset drop_columns(const Dataset& ds, const std::vector<Index>& columns) {
  std::set<Index> drop(columns.begin(), columns.end());
  for (Index c : drop)
    require(c >= 0 && c < ds.cols(), ErrorCode::kInvalidArgument,
            "drop_columns: index " + std::to_string(c) + " out of range");
  std::vector<Index> keep;
  for (Index j = 0; j < ds.cols(); ++j)
    if (!drop.count(j)) keep.push_back(j);
  Dataset out = ds;
  out.features = ds.features(Eigen::all, keep);
  out.feature_names.clear();
  for (Index j : keep) out.feature_names.push_back(ds.feature_names[static_cast<std::size_t>(j)]);
  return out;
}

Dataset concat_rows(const std::vector<Dataset>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_rows: no parts");
  Index n = 0;
  const Index p = parts.front().cols();
  const bool labelled = parts.front().has_labels();
  for (const auto& d : parts) {
    require(d.cols() == p && d.has_labels() == labelled, ErrorCode::kShapeMismatch,
            "concat_rows: inconsistent parts");
    n += d.rows();
  }
  Dataset out;
  out.features.resize(n, p);
  if (labelled) out.labels = VectorXd(n);
  Index off = 0;
  for (const auto& d : parts) {
    out.features.middleRows(off, d.rows()) = d.features;
    if (labelled) out.labels->segment(off, d.rows()) = *d.labels;
    out.domain_ids.insert(out.domain_ids.end(), d.domain_ids.begin(), d.domain_ids.end());
    off += d.rows();
  }
  out.feature_names = parts.front().feature_names;
  return out;
}

double age_transform(double y, const AgeTransformParams& params) {
  require(params.y_adult > 0, ErrorCode::kInvalidArgument,
          "age_transform: y_adult must be > 0");
  require(y >= 0, ErrorCode::kInvalidArgument,
          "age_transform: negative age " + std::to_string(y));
  const double a = params.y_adult;
  if (y <= a) return std::log1p(y) - std::log1p(a);
  return (y - a) / (a + 1.0);
}

double age_transform_inverse(double z, const AgeTransformParams& params) {
  require(params.y_adult > 0, ErrorCode::kInvalidArgument,
          "age_transform_inverse: y_adult must be > 0");
  const double a = params.y_adult;
  if (z <= 0) return (a + 1.0) * std::exp(z) - 1.0;
  return z * (a + 1.0) + a;
}

VectorXd age_transform(const VectorXd& y, const AgeTransformParams& params) {
  return y.unaryExpr([&](double v) { return age_transform(v, params); });
}

VectorXd age_transform_inverse(const VectorXd& z, const AgeTransformParams& params) {
  return z.unaryExpr([&](double v) { return age_transform_inverse(v, params); });
}

VectorXd FeatureStats::mean() const {
  require(count > 0, ErrorCode::kInvalidArgument, "FeatureStats: count is 0");
  return sum / static_cast<double>(count);
}

VectorXd FeatureStats::variance() const {
  const VectorXd m = mean();
  VectorXd v = sum_sq / static_cast<double>(count) - m.cwiseProduct(m);
  return v.cwiseMax(0.0);
}

VectorXd FeatureStats::sd() const { return variance().cwiseSqrt(); }

FeatureStats local_stats(const MatrixXd& features) {
  require(features.rows() >= 1 && features.cols() >= 1, ErrorCode::kInvalidArgument,
          "local_stats: empty matrix");
  FeatureStats s;
  s.count = features.rows();
  s.sum = features.colwise().sum().transpose();
  s.sum_sq = features.array().square().colwise().sum().transpose();
  return s;
}

FeatureStats local_stats(const VectorXd& values) {
  return local_stats(MatrixXd(values));
}

FeatureStats merge_stats(const std::vector<FeatureStats>& parts) {
  FeatureStats out;
  bool have_dim = false;
  for (const auto& s : parts) {
    if (s.count == 0 && s.dim() == 0) continue;
    if (!have_dim) {
      out.sum = VectorXd::Zero(s.dim());
      out.sum_sq = VectorXd::Zero(s.dim());
      have_dim = true;
    }
    require(s.dim() == out.dim() && s.sum_sq.size() == out.dim(),
            ErrorCode::kShapeMismatch,
            "merge_stats: dimension " + std::to_string(s.dim()) + " vs " +
                std::to_string(out.dim()));
    out.count += s.count;
    out.sum += s.sum;
    out.sum_sq += s.sum_sq;
  }
  return out;
}

std::vector<Index> zero_variance_columns(const FeatureStats& stats) {
  const VectorXd var = stats.variance();
  std::vector<Index> out;
  for (Index j = 0; j < var.size(); ++j)
    if (var(j) <= kZeroVariance) out.push_back(j);
  return out;
}

FeatureStats drop_stat_columns(const FeatureStats& stats, const std::vector<Index>& columns) {
  std::set<Index> drop(columns.begin(), columns.end());
  std::vector<Index> keep;
  for (Index j = 0; j < stats.dim(); ++j)
    if (!drop.count(j)) keep.push_back(j);
  FeatureStats out;
  out.count = stats.count;
  out.sum = stats.sum(keep);
  out.sum_sq = stats.sum_sq(keep);
  return out;
}

Dataset standardize(const Dataset& ds, const FeatureStats& stats) {
  require(stats.dim() == ds.cols(), ErrorCode::kShapeMismatch,
          "standardize: stats have " + std::to_string(stats.dim()) +
              " columns, data has " + std::to_string(ds.cols()));
  const auto zero = zero_variance_columns(stats);
  if (!zero.empty()) {
    std::string list;
    for (Index j : zero) list += (list.empty() ? "" : ",") + std::to_string(j);
    fail(ErrorCode::kInvalidArgument, "standardize: zero-variance column(s) " + list);
  }
  const VectorXd mu = stats.mean();
  const VectorXd sd = stats.sd();
  Dataset out = ds;
  out.features = ((ds.features.rowwise() - mu.transpose()).array().rowwise() /
                  sd.transpose().array())
                     .matrix();
  return out;
}

VectorXd standardize_values(const VectorXd& v, const FeatureStats& stats) {
  require(stats.dim() == 1, ErrorCode::kShapeMismatch,
          "standardize_values: expected scalar stats");
  const double sd = stats.sd()(0);
  require(sd * sd > kZeroVariance, ErrorCode::kInvalidArgument,
          "standardize_values: zero variance");
  return (v.array() - stats.mean()(0)) / sd;
}

VectorXd destandardize_values(const VectorXd& z, const FeatureStats& stats) {
  require(stats.dim() == 1, ErrorCode::kShapeMismatch,
          "destandardize_values: expected scalar stats");
  return (z.array() * stats.sd()(0) + stats.mean()(0)).matrix();
}

std::vector<Dataset> partition_uniform(const Dataset& ds, int n_clients,
                                       std::uint64_t seed) {
  require(n_clients >= 1, ErrorCode::kInvalidArgument,
          "partition_uniform: n_clients must be >= 1");
  const Index n = ds.rows();
  require(n >= n_clients, ErrorCode::kInvalidArgument,
          "partition_uniform: " + std::to_string(n) + " rows for " +
              std::to_string(n_clients) + " clients");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  if (n_clients > 1) {
    Prng prng(derive_seed(seed, "partition"));
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(prng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
  }
  std::vector<Dataset> shards;
  const Index base = n / n_clients;
  const Index extra = n % n_clients;
  Index off = 0;
  for (int c = 0; c < n_clients; ++c) {
    const Index size = base + (c < extra ? 1 : 0);
    std::vector<Index> rows(perm.begin() + off, perm.begin() + off + size);
    shards.push_back(select_rows(ds, rows));
    off += size;
  }
  return shards;
}

void SyntheticConfig::validate() const {
  auto check = [](bool ok, const std::string& field, const std::string& what) {
    require(ok, ErrorCode::kConfig, "synthetic." + field + ": " + what);
  };
  check(p >= 2, "p", "must be >= 2");
  check(n_clients >= 1, "n_clients", "must be >= 1");
  check(n_source_total >= n_clients, "n_source_total", "must be >= n_clients");
  check(n_target >= 1, "n_target", "must be >= 1");
  check(n_target_domains >= 1, "n_target_domains", "must be >= 1");
  check(static_cast<int>(shift_strength.size()) == n_target_domains, "shift_strength",
        "needs one entry per target domain");
  for (double s : shift_strength)
    check(s >= 0 && s <= 1, "shift_strength", "entries must be in [0, 1]");
  check(noise_sd >= 0 && std::isfinite(noise_sd), "noise_sd", "must be >= 0");
  check(support_size >= 0 && support_size <= p, "support_size", "must be in [0, p]");
  check(rank >= 1, "rank", "must be >= 1");
  check(latent_noise >= 0, "latent_noise", "must be >= 0");
  check(n_shifted >= 0 && n_shifted <= p, "n_shifted", "must be in [0, p]");
  check((support_size + 1) / 2 <= n_shifted, "n_shifted",
        "must cover half of the support");
}

namespace {

// Draws k distinct values from `pool` (partial Fisher-Yates).
std::vector<Index> sample_without_replacement(std::vector<Index> pool, Index k,
                                              Prng& prng) {
  for (Index i = 0; i < k; ++i) {
    const auto j = static_cast<Index>(
        i + static_cast<Index>(prng.below(static_cast<std::uint64_t>(
                static_cast<Index>(pool.size()) - i))));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& config) {
  config.validate();
  const Index p = config.p;
  Prng structure(derive_seed(config.seed, "synthetic-structure"));
  const MatrixXd loadings = structure.normal_matrix(p, config.rank);

  std::vector<Index> all(static_cast<std::size_t>(p));
  std::iota(all.begin(), all.end(), Index{0});
  const auto support = sample_without_replacement(all, config.support_size, structure);
  VectorXd beta = VectorXd::Zero(p);
  for (Index f : support) {
    const double sign = structure.below(2) == 0 ? -1.0 : 1.0;
    beta(f) = sign * structure.uniform(1.0, 2.0);
  }
  // Shifted subset: half of the support plus unrelated features.
  std::vector<Index> shifted(support.begin(),
                             support.begin() + (config.support_size + 1) / 2);
  std::vector<Index> rest;
  for (Index f : all)
    if (std::find(support.begin(), support.end(), f) == support.end()) rest.push_back(f);
  const auto filler = sample_without_replacement(
      rest, config.n_shifted - static_cast<Index>(shifted.size()), structure);
  shifted.insert(shifted.end(), filler.begin(), filler.end());
  std::sort(shifted.begin(), shifted.end());

  auto draw = [&](Index n, Prng& prng) -> MatrixXd {
    const MatrixXd z = prng.normal_matrix(n, config.rank);
    return z * loadings.transpose() + config.latent_noise * prng.normal_matrix(n, p);
  };
  auto labels_for = [&](const MatrixXd& x, Prng& prng) -> VectorXd {
    VectorXd noise(x.rows());
    for (Index i = 0; i < x.rows(); ++i) noise(i) = prng.normal();
    return x * beta + config.noise_sd * noise;
  };

  SyntheticData out;
  out.beta = beta;
  out.shifted_features = shifted;
  const auto names = default_feature_names(p);

  Prng src(derive_seed(config.seed, "synthetic-source"));
  Dataset pooled;
  pooled.features = draw(config.n_source_total, src);
  pooled.labels = labels_for(pooled.features, src);
  pooled.domain_ids.assign(static_cast<std::size_t>(config.n_source_total), 0);
  pooled.feature_names = names;
  out.source_shards = partition_uniform(pooled, config.n_clients,
                                        derive_seed(config.seed, "synthetic-partition"));

  std::vector<Dataset> domains;
  for (int d = 0; d < config.n_target_domains; ++d) {
    Prng tgt(derive_seed(config.seed, "synthetic-target", static_cast<std::uint64_t>(d)));
    const double s = config.shift_strength[static_cast<std::size_t>(d)];
    Dataset dom;
    const MatrixXd x = draw(config.n_target, tgt);
    // Labels follow the undisturbed features.
    dom.labels = labels_for(x, tgt);
    dom.features = x;
    for (Index f : shifted) {
      const MatrixXd independent = draw(config.n_target, tgt);
      dom.features.col(f) = std::sqrt(1.0 - s) * x.col(f) + std::sqrt(s) * independent.col(f);
    }
    dom.domain_ids.assign(static_cast<std::size_t>(config.n_target), d);
    dom.feature_names = names;
    domains.push_back(std::move(dom));
    out.similarities.push_back(1.0 - s);
  }
  out.target = concat_rows(domains);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  require(res.ec == std::errc(), ErrorCode::kIo, "format_double: conversion failed");
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, std::size_t line, std::size_t col) {
  double v = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  const auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last, ErrorCode::kIo,
          "read_csv: line " + std::to_string(line) + ", column " + std::to_string(col) +
              ": not a number '" + text + "'");
  return v;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "write_csv: cannot open " + path.string());
  out << "domain_id";
  if (ds.labels) out << ",label";
  for (const auto& name : ds.feature_names) out << ',' << name;
  out << '\n';
  for (Index i = 0; i < ds.rows(); ++i) {
    out << ds.domain_ids[static_cast<std::size_t>(i)];
    if (ds.labels) out << ',' << format_double((*ds.labels)(i));
    for (Index j = 0; j < ds.cols(); ++j) out << ',' << format_double(ds.features(i, j));
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "write_csv: write failed for " + path.string());
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "read_csv: cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kIo,
          "read_csv: missing header in " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  require(!header.empty() && header[0] == "domain_id", ErrorCode::kIo,
          "read_csv: first column must be domain_id");
  const bool labelled = header.size() > 1 && header[1] == "label";
  const std::size_t first_feature = labelled ? 2 : 1;
  require(header.size() > first_feature, ErrorCode::kIo, "read_csv: no feature columns");

  Dataset ds;
  ds.feature_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_feature),
                          header.end());
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorCode::kIo,
            "read_csv: line " + std::to_string(lineno) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    const double dom = parse_double(cells[0], lineno, 0);
    require(dom >= 0 && dom == std::floor(dom), ErrorCode::kIo,
            "read_csv: line " + std::to_string(lineno) + ": bad domain_id");
    ds.domain_ids.push_back(static_cast<int>(dom));
    if (labelled) labels.push_back(parse_double(cells[1], lineno, 1));
    std::vector<double> row;
    for (std::size_t c = first_feature; c < cells.size(); ++c)
      row.push_back(parse_double(cells[c], lineno, c));
    rows.push_back(std::move(row));
  }
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(ds.feature_names.size());
  ds.features.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j)
      ds.features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (labelled) ds.labels = Eigen::Map<VectorXd>(labels.data(), n);
  ds.validate();
  return ds;
}

}  // namespace freda::data
