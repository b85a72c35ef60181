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

// Centralized pooled-plaintext pipeline, output files, and result tables.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "freda/protocol/audit.hpp"
#include "freda/protocol/engine.hpp"

namespace freda::protocol {

struct OracleResult {
  std::vector<DomainResult> domains;  // t1 and t2 rows
  std::vector<SweepRow> sweep;
  std::map<int, wen::Model<double>> final_models;
  std::vector<DomainWeights> weights;
  std::vector<gpr::HyperParams<double>> hyperparams;  // pooled optimum per feature
  MatrixXd feature_means;
  MatrixXd feature_vars;
  SimilarityModel similarity;
  std::vector<Index> dropped_columns;
  std::string config_digest;

  std::string metrics_csv() const;
};

// Same phases on pooled plaintext: GPR per feature with pooled-optimal
// hyper-parameters, the same weights and lambda selection, coordinate
// descent instead of federated training.
OracleResult run_oracle(const RunConfig& cfg, const ProtocolInputs& inputs);

// Writes results.csv, transcript.jsonl, audit.txt, models.csv and, in sweep
// mode, sweep.csv.
void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg,
                       const RunResult& result, const AuditReport& audit);
void write_oracle_outputs(const std::filesystem::path& dir, const OracleResult& result);

std::string sweep_csv(const std::vector<SweepRow>& rows);

struct ResultRow {
  int domain = 0;
  Index n_samples = 0;
  double lambda_used = 0;
  double mae_freda = 0;
  double mae_enls = 0;
};

struct ResultTable {
  std::string path;
  std::map<std::string, std::string> meta;  // from header comments
  std::vector<ResultRow> rows;
};

ResultTable read_results(const std::filesystem::path& path);
ResultTable parse_results(const std::string& text, const std::string& name = "<text>");

// Joined per-domain MAE across tables. Deltas: freda - en-ls for each
// table, then freda(i) - freda(first) for every later table.
std::string compare_results(const std::vector<ResultTable>& tables);

}  // namespace freda::protocol
