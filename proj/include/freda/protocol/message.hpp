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

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "freda/common.hpp"

namespace freda::protocol {

enum class Role : std::uint8_t { kAggregator = 0, kSource = 1, kTarget = 2 };

struct PartyId {
  Role role = Role::kAggregator;
  std::uint32_t index = 0;  // meaningful for sources only

  static PartyId aggregator() { return {Role::kAggregator, 0}; }
  static PartyId source(std::uint32_t i) { return {Role::kSource, i}; }
  static PartyId target() { return {Role::kTarget, 0}; }

  // Total order used for delivery: aggregator, sources by index, target.
  std::uint64_t rank() const;
  std::string str() const;
  static PartyId parse(const std::string& text);

  friend bool operator==(const PartyId&, const PartyId&) = default;
  friend auto operator<=>(const PartyId& a, const PartyId& b) { return a.rank() <=> b.rank(); }
};

enum class Phase : std::uint8_t {
  kSetup = 0,
  kFeatureModels = 1,
  kWeights = 2,
  kLambdaSearch = 3,
  kFinalTraining = 4,
  kResults = 5,
};

std::string phase_name(Phase p);
Phase parse_phase(const std::string& name);

// Dense row-major tensor of doubles; rank 0 is a scalar.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t expected_size() const;
  bool well_formed() const { return expected_size() == data.size(); }

  static Tensor scalar(double v);
  static Tensor vector(const VectorXd& v);
  static Tensor vector(const std::vector<double>& v);
  static Tensor matrix(const MatrixXd& m);

  VectorXd as_vector() const;  // any rank, flattened
  MatrixXd as_matrix() const;  // rank 2 only
  std::uint32_t cols() const { return dims.size() == 2 ? dims[1] : 0; }
  std::uint32_t rows() const { return dims.size() == 2 ? dims[0] : 0; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// 64-bit seeds travel as two exact 32-bit halves.
Tensor seed_tensor(std::uint64_t seed);
std::uint64_t tensor_seed(const Tensor& t);

struct Message {
  std::uint64_t seq = 0;
  Phase phase = Phase::kSetup;
  PartyId sender;
  PartyId receiver;
  std::string kind;
  Tensor payload;

  friend bool operator==(const Message&, const Message&) = default;
};

// Wire encoding, all integers and floats big-endian.
// frame   := u32 body_length, body
// body    := u64 seq, u8 phase, party sender, party receiver,
//            u32 kind_length, kind bytes, payload
// party   := u8 role, u32 index
// payload := u32 rank, u32 dims[rank], f64 data[prod(dims)]
std::vector<std::uint8_t> encode_payload(const Tensor& t);
std::vector<std::uint8_t> encode_body(const Message& m);
std::vector<std::uint8_t> encode_frame(const Message& m);
Message decode_body(std::span<const std::uint8_t> body);
// Consumes one frame; returns false when `buffer` holds only a partial frame.
bool decode_frame(std::vector<std::uint8_t>& buffer, Message& out);

// SHA-256 of the encoded payload, hex.
std::string payload_digest(const Tensor& t);

}  // namespace freda::protocol
