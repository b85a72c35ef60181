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

// The freda protocol: an aggregator with no data, N labelled source clients
// and one unlabelled target client, run as actors exchanging messages in
// barrier-separated steps.
//
//   setup           seed exchange between data holders, secure-summed stats
//   feature models  per-feature GP hyper-parameters (secure average), masked
//                   Gram products, encoded predictive operators
//   weights         target-side confidences and feature weights per domain
//   lambda search   federated weighted elastic nets over a lambda grid for
//                   the calibration (t1) domains, similarity -> lambda fit
//   final training  one federated model per evaluation (t2) domain

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "freda/datamodel.hpp"
#include "freda/gpr.hpp"
#include "freda/protocol/config.hpp"
#include "freda/protocol/message.hpp"
#include "freda/protocol/transcript.hpp"
#include "freda/wen.hpp"

namespace freda::protocol {

// Two-sided tail probability of a standard normal beyond |z|.
double confidence(double z);
// Contribution of one sample; sd == 0 counts as a match only for a zero residual.
double sample_confidence(double residual, double sd);
// (1 - c)^k
double feature_weight(double c, double k);

struct DomainWeights {
  int domain = 0;
  VectorXd confidence;  // P
  VectorXd weight;      // P
  double k = 3.0;
  std::int64_t zero_sd_events = 0;
};

// x_target, means and variances are n_t x P; rows tagged by domain_ids.
std::vector<DomainWeights> domain_weights(const MatrixXd& x_target,
                                          const std::vector<int>& domain_ids,
                                          const MatrixXd& means,
                                          const MatrixXd& variances, double k);

struct SimilarityModel {
  double slope = 0;
  double intercept = 0;
  bool log_space = true;
  bool degenerate = false;  // fewer than two distinct similarities
  std::vector<double> residuals;

  double predict(double similarity) const;
};

SimilarityModel fit_similarity_model(const std::vector<double>& similarity,
                                     const std::vector<double>& lambda, bool log_space = true);

// argmin; on ties the earliest index wins (the larger lambda on a decreasing grid).
std::size_t select_lambda(const std::vector<double>& maes);

struct ProtocolInputs {
  std::vector<data::Dataset> sources;  // raw labelled shards
  data::Dataset target;                // raw, labelled (t1 selection and scoring)
  std::vector<double> similarities;    // per target domain
};

ProtocolInputs build_inputs(const RunConfig& cfg);

struct DomainResult {
  int domain = 0;
  Index n_samples = 0;
  std::string role;  // "t1" or "t2"
  double lambda_used = 0;
  double mae_freda = 0;
  double mae_enls = 0;
};

// Sweep mode: one row per (calibration combination, evaluated domain).
struct SweepRow {
  std::vector<int> t1;
  int domain = 0;
  double lambda_used = 0;
  double mae_freda = 0;
  double mae_enls = 0;
};

struct RunResult {
  std::vector<DomainResult> domains;
  std::vector<SweepRow> sweep;
  std::map<int, wen::Model<double>> final_models;  // by t2 domain (non-sweep)
  std::vector<DomainWeights> weights;
  std::vector<gpr::HyperParams<double>> hyperparams;  // per feature
  MatrixXd feature_means;  // n_t x P, standardized units
  MatrixXd feature_vars;
  SimilarityModel similarity;
  std::vector<Index> dropped_columns;
  std::vector<std::string> feature_names;
  Transcript transcript;
  std::string config_digest;
  std::int64_t hp_fallbacks = 0;

  // Primary results as CSV text (the metrics file).
  std::string metrics_csv() const;
  std::string digest() const;
};

struct RunOptions {
  std::string transport = "memory";
  bool concurrent = false;
  // Called on every outgoing message before it is recorded and sent.
  std::function<void(Message&)> tamper;
};

RunResult run_protocol(const RunConfig& cfg, const ProtocolInputs& inputs,
                       const RunOptions& options);
RunResult run_full_protocol(const RunConfig& cfg);

// Baseline MAE per target domain (label units) for an elastic net tuned by
// cross-validation on the pooled, standardized source data.
std::map<int, double> enls_domain_mae(const RunConfig& cfg, const ProtocolInputs& inputs,
                                      const std::vector<Index>& dropped);

// Results table: header comments, then t2 rows sorted by domain.
std::string results_csv(const std::vector<DomainResult>& domains,
                        const std::vector<std::pair<std::string, std::string>>& header);

// Named sub-seeds of a run.
std::uint64_t sub_seed(std::uint64_t master, const std::string& name, std::uint64_t index = 0);

}  // namespace freda::protocol
