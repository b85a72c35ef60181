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
#include <string>
#include <unordered_set>
#include <vector>

#include "freda/datamodel.hpp"
#include "freda/protocol/engine.hpp"
#include "freda/protocol/transcript.hpp"

namespace freda::protocol {

// Plaintext values that must never appear in what the aggregator sees.
// Matching is bitwise; values with |v| <= 1e-12 are ignored.
class SentinelSet {
 public:
  void add(double v);
  void add(const MatrixXd& m);
  void add(const VectorXd& v);
  bool contains(double v) const;
  std::size_t size() const { return bits_.size(); }

 private:
  std::unordered_set<std::uint64_t> bits_;
};

// Raw and standardized features of every party, raw and transformed labels.
SentinelSet collect_sentinels(const ProtocolInputs& inputs, const RunConfig& cfg);
// Every cell of one or more CSV datasets.
SentinelSet sentinels_from_csv(const std::vector<std::string>& paths);

struct Violation {
  std::string rule;  // plaintext | masked_dim | kind | hyperparams | target_kind | seed
  std::uint64_t seq = 0;
  std::string sender;
  std::string receiver;
  std::string kind;
  std::string detail;
};

struct AuditReport {
  std::vector<Violation> violations;
  std::size_t messages = 0;
  std::size_t aggregator_messages = 0;
  std::size_t masked_matrices = 0;
  std::int64_t min_masked_cols = 0;
  std::int64_t p = 0;
  std::int64_t d = 0;
  bool payloads_checked = false;  // false for digest-only transcripts
  std::size_t sentinel_count = 0;

  bool clean() const { return violations.empty(); }
  std::string text() const;
};

AuditReport audit_transcript(const Transcript& transcript, const SentinelSet& sentinels);

}  // namespace freda::protocol
