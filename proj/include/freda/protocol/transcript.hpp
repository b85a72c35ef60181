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
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "freda/protocol/message.hpp"

namespace freda::protocol {

struct TranscriptMeta {
  std::uint64_t master_seed = 0;
  std::string config_digest;
  std::int64_t p = 0;  // features after dropping zero-variance columns
  std::int64_t d = 0;  // lifted dimension
  std::int64_t n_sources = 0;
  std::map<std::string, std::string> extra;  // named sub-seeds and the like
};

struct TranscriptEntry {
  Message message;
  std::string digest;          // of the payload
  bool payload_present = true;  // false when read from a digest-only file
};

class Transcript {
 public:
  Transcript() = default;
  Transcript(const Transcript& other);
  Transcript& operator=(const Transcript& other);

  void record(const Message& m);  // thread-safe
  // Stable sort on (phase, sender rank, seq): the order the digest covers.
  void normalize();

  const std::vector<TranscriptEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  TranscriptMeta& meta() { return meta_; }
  const TranscriptMeta& meta() const { return meta_; }

  // One JSON object per line; the first line carries the metadata.
  std::string to_jsonl(bool inline_payloads) const;
  static Transcript from_jsonl(const std::string& text);
  void write(const std::filesystem::path& path, bool inline_payloads) const;
  static Transcript read(const std::filesystem::path& path);

  // SHA-256 over the digest-only JSON lines of a normalized copy.
  std::string digest() const;

  // Test hook: direct access for tampering with recorded payloads.
  std::vector<TranscriptEntry>& mutable_entries() { return entries_; }

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
  TranscriptMeta meta_;
};

}  // namespace freda::protocol
