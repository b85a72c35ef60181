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

#include "freda/protocol/audit.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace freda::protocol {

void SentinelSet::add(double v) {
  if (!(std::abs(v) > 1e-12) || !std::isfinite(v)) return;
  bits_.insert(std::bit_cast<std::uint64_t>(v));
}

void SentinelSet::add(const MatrixXd& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) add(m(i, j));
}

void SentinelSet::add(const VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) add(v(i));
}

bool SentinelSet::contains(double v) const {
  if (!(std::abs(v) > 1e-12)) return false;
  return bits_.count(std::bit_cast<std::uint64_t>(v)) > 0;
}

SentinelSet collect_sentinels(const ProtocolInputs& inputs, const RunConfig& cfg) {
  SentinelSet s;
  std::vector<data::FeatureStats> parts, lparts;
  std::vector<VectorXd> labels;
  for (const auto& src : inputs.sources) {
    s.add(src.features);
    parts.push_back(data::local_stats(src.features));
    VectorXd y = *src.labels;
    s.add(y);
    if (cfg.label_transform == "age") y = data::age_transform(y, {cfg.y_adult});
    s.add(y);
    lparts.push_back(data::local_stats(y));
    labels.push_back(y);
  }
  s.add(inputs.target.features);
  if (inputs.target.has_labels()) s.add(*inputs.target.labels);

  const auto pooled = data::merge_stats(parts);
  const auto dropped = data::zero_variance_columns(pooled);
  const auto stats = data::drop_stat_columns(pooled, dropped);
  const auto lstats = data::merge_stats(lparts);
  for (std::size_t i = 0; i < inputs.sources.size(); ++i) {
    s.add(data::standardize(data::drop_columns(inputs.sources[i], dropped), stats).features);
    s.add(data::standardize_values(labels[i], lstats));
  }
  s.add(data::standardize(data::drop_columns(inputs.target, dropped), stats).features);
  return s;
}

SentinelSet sentinels_from_csv(const std::vector<std::string>& paths) {
  SentinelSet s;
  for (const auto& path : paths) {
    const auto ds = data::read_csv(path);
    s.add(ds.features);
    if (ds.has_labels()) s.add(*ds.labels);
  }
  return s;
}

namespace {

const std::set<std::string> kAggregatorKinds{"stats_share", "hp_share",   "masked_data",
                                             "xty_share",   "coef_share", "weights",
                                             "lambda_pred"};
const std::set<std::string> kTargetKinds{"mask_seed", "pooled_stats", "dropped_columns",
                                         "cinv",      "pred_var",     "mean_share",
                                         "models",    "final_models"};

// Leading columns holding domain ids and flags rather than values.
std::uint32_t index_columns(const std::string& kind) {
  if (kind == "weights") return 2;
  if (kind == "lambda_pred") return 1;
  return 0;
}

}  // namespace

AuditReport audit_transcript(const Transcript& transcript, const SentinelSet& sentinels) {
  AuditReport r;
  r.p = transcript.meta().p;
  r.d = transcript.meta().d;
  r.sentinel_count = sentinels.size();
  r.payloads_checked = !transcript.entries().empty();
  std::map<std::uint32_t, int> hp_per_source;
  std::int64_t min_cols = -1;

  auto violate = [&r](const Message& m, std::string rule, std::string detail) {
    r.violations.push_back({std::move(rule), m.seq, m.sender.str(), m.receiver.str(), m.kind,
                            std::move(detail)});
  };

  for (const auto& e : transcript.entries()) {
    const Message& m = e.message;
    ++r.messages;
    if (!e.payload_present) r.payloads_checked = false;
    if ((m.kind == "mask_seed" || m.kind == "pair_seed") &&
        m.receiver.role == Role::kAggregator)
      violate(m, "seed", "mask seed delivered to the aggregator");

    if (m.receiver.role == Role::kTarget && !kTargetKinds.count(m.kind))
      violate(m, "target_kind", "kind not allowed for the target");

    if (m.receiver.role != Role::kAggregator) continue;
    ++r.aggregator_messages;
    if (!kAggregatorKinds.count(m.kind)) {
      violate(m, "kind", "kind not allowed for the aggregator");
    }
    if (m.kind.find("hp") != std::string::npos || m.kind.find("hyper") != std::string::npos) {
      if (m.kind != "hp_share" || m.sender.role != Role::kSource)
        violate(m, "hyperparams", "hyper-parameters must arrive as source hp_share");
      else
        ++hp_per_source[m.sender.index];
    }
    if (m.kind == "masked_data") {
      ++r.masked_matrices;
      const auto cols = static_cast<std::int64_t>(m.payload.dims.size() == 2 ? m.payload.dims[1] : 0);
      if (min_cols < 0 || cols < min_cols) min_cols = cols;
      if (m.payload.dims.size() != 2 || cols <= r.p || (r.d > 0 && cols != r.d))
        violate(m, "masked_dim",
                "masked matrix has " + std::to_string(cols) + " columns, P = " +
                    std::to_string(r.p) + ", d = " + std::to_string(r.d));
    }
    if (e.payload_present) {
      const auto skip = index_columns(m.kind);
      const std::uint32_t width = m.payload.dims.size() == 2 ? m.payload.dims[1] : 0;
      for (std::size_t i = 0; i < m.payload.data.size(); ++i) {
        if (skip > 0 && width > 0 && (i % width) < skip) continue;
        if (sentinels.contains(m.payload.data[i])) {
          std::ostringstream o;
          o.precision(17);
          o << "plaintext value " << m.payload.data[i] << " at offset " << i;
          violate(m, "plaintext", o.str());
          break;
        }
      }
    }
  }
  for (const auto& [src, count] : hp_per_source)
    if (count != 1) {
      Message m;
      m.sender = PartyId::source(src);
      m.kind = "hp_share";
      violate(m, "hyperparams", "source sent " + std::to_string(count) + " hp_share messages");
    }
  r.min_masked_cols = std::max<std::int64_t>(min_cols, 0);
  return r;
}

std::string AuditReport::text() const {
  std::ostringstream o;
  o << "status: " << (clean() ? "clean" : "VIOLATIONS") << "\n";
  o << "messages: " << messages << " (to aggregator: " << aggregator_messages << ")\n";
  o << "masked matrices: " << masked_matrices << ", min columns " << min_masked_cols
    << ", P = " << p << ", d = " << d << "\n";
  o << "payload scan: "
    << (payloads_checked ? "done against " + std::to_string(sentinel_count) + " sentinels"
                         : "skipped (digest-only transcript)")
    << "\n";
  for (const auto& v : violations)
    o << "violation " << v.rule << ": seq " << v.seq << " " << v.sender << " -> " << v.receiver
      << " [" << v.kind << "] " << v.detail << "\n";
  return o.str();
}

}  // namespace freda::protocol
