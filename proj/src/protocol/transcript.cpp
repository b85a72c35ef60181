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

#include "freda/protocol/transcript.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "freda/digest.hpp"

namespace freda::protocol {

using nlohmann::json;

Transcript::Transcript(const Transcript& other) {
  std::lock_guard<std::mutex> lock(other.mu_);
  entries_ = other.entries_;
  meta_ = other.meta_;
}

Transcript& Transcript::operator=(const Transcript& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  entries_ = other.entries_;
  meta_ = other.meta_;
  return *this;
}

void Transcript::record(const Message& m) {
  TranscriptEntry e{m, payload_digest(m.payload), true};
  std::lock_guard<std::mutex> lock(mu_);
  entries_.push_back(std::move(e));
}

void Transcript::normalize() {
  std::lock_guard<std::mutex> lock(mu_);
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const TranscriptEntry& a, const TranscriptEntry& b) {
                     const auto& x = a.message;
                     const auto& y = b.message;
                     if (x.phase != y.phase) return x.phase < y.phase;
                     if (x.sender.rank() != y.sender.rank())
                       return x.sender.rank() < y.sender.rank();
                     return x.seq < y.seq;
                   });
}

namespace {

json meta_json(const TranscriptMeta& m) {
  json j;
  j["type"] = "meta";
  j["master_seed"] = std::to_string(m.master_seed);
  j["config_digest"] = m.config_digest;
  j["p"] = m.p;
  j["d"] = m.d;
  j["n_sources"] = m.n_sources;
  j["extra"] = m.extra;
  return j;
}

json entry_json(const TranscriptEntry& e, bool inline_payloads) {
  const Message& m = e.message;
  json j;
  j["seq"] = m.seq;
  j["phase"] = phase_name(m.phase);
  j["sender"] = m.sender.str();
  j["receiver"] = m.receiver.str();
  j["kind"] = m.kind;
  j["shape"] = m.payload.dims;
  j["digest"] = e.digest;
  if (inline_payloads && e.payload_present) j["payload"] = m.payload.data;
  return j;
}

}  // namespace

std::string Transcript::to_jsonl(bool inline_payloads) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::string out = meta_json(meta_).dump() + "\n";
  for (const auto& e : entries_) out += entry_json(e, inline_payloads).dump() + "\n";
  return out;
}

Transcript Transcript::from_jsonl(const std::string& text) {
  Transcript t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kIo, "transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.contains("type") && j["type"] == "meta") {
        auto& m = t.meta_;
        m.master_seed = std::stoull(j.at("master_seed").get<std::string>());
        m.config_digest = j.at("config_digest").get<std::string>();
        m.p = j.at("p").get<std::int64_t>();
        m.d = j.at("d").get<std::int64_t>();
        m.n_sources = j.at("n_sources").get<std::int64_t>();
        m.extra = j.at("extra").get<std::map<std::string, std::string>>();
        continue;
      }
      TranscriptEntry e;
      e.message.seq = j.at("seq").get<std::uint64_t>();
      e.message.phase = parse_phase(j.at("phase").get<std::string>());
      e.message.sender = PartyId::parse(j.at("sender").get<std::string>());
      e.message.receiver = PartyId::parse(j.at("receiver").get<std::string>());
      e.message.kind = j.at("kind").get<std::string>();
      e.message.payload.dims = j.at("shape").get<std::vector<std::uint32_t>>();
      e.digest = j.at("digest").get<std::string>();
      e.payload_present = j.contains("payload");
      if (e.payload_present) {
        e.message.payload.data = j["payload"].get<std::vector<double>>();
        require(e.message.payload.well_formed(), ErrorCode::kIo,
                "transcript line " + std::to_string(lineno) + ": payload does not match shape");
      }
      t.entries_.push_back(std::move(e));
    } catch (const json::exception& e) {
      fail(ErrorCode::kIo, "transcript line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

void Transcript::write(const std::filesystem::path& path, bool inline_payloads) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write transcript " + path.string());
  out << to_jsonl(inline_payloads);
}

Transcript Transcript::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read transcript " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

std::string Transcript::digest() const {
  Transcript copy(*this);
  copy.normalize();
  return sha256_hex(copy.to_jsonl(false));
}

}  // namespace freda::protocol
