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

#include "freda/protocol/message.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <limits>

#include "freda/digest.hpp"

namespace freda::protocol {

std::uint64_t PartyId::rank() const {
  switch (role) {
    case Role::kAggregator:
      return 0;
    case Role::kSource:
      return 1 + static_cast<std::uint64_t>(index);
    case Role::kTarget:
      return std::uint64_t{1} << 40;
  }
  return 0;
}

std::string PartyId::str() const {
  switch (role) {
    case Role::kAggregator:
      return "aggregator";
    case Role::kSource:
      return "source:" + std::to_string(index);
    case Role::kTarget:
      return "target";
  }
  return "?";
}

PartyId PartyId::parse(const std::string& text) {
  if (text == "aggregator") return aggregator();
  if (text == "target") return target();
  if (text.rfind("source:", 0) == 0) {
    const std::string num = text.substr(7);
    require(!num.empty() && num.find_first_not_of("0123456789") == std::string::npos,
            ErrorCode::kProtocol, "PartyId: bad source index in '" + text + "'");
    return source(static_cast<std::uint32_t>(std::stoul(num)));
  }
  fail(ErrorCode::kProtocol, "PartyId: unknown party '" + text + "'");
}

namespace {
constexpr std::array<const char*, 6> kPhaseNames = {
    "setup", "feature_models", "weights", "lambda_search", "final_training", "results"};
}

std::string phase_name(Phase p) { return kPhaseNames.at(static_cast<std::size_t>(p)); }

Phase parse_phase(const std::string& name) {
  for (std::size_t i = 0; i < kPhaseNames.size(); ++i)
    if (name == kPhaseNames[i]) return static_cast<Phase>(i);
  fail(ErrorCode::kProtocol, "unknown phase '" + name + "'");
}

std::size_t Tensor::expected_size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor Tensor::scalar(double v) { return {{}, {v}}; }

Tensor Tensor::vector(const VectorXd& v) {
  return {{static_cast<std::uint32_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

Tensor Tensor::vector(const std::vector<double>& v) {
  return {{static_cast<std::uint32_t>(v.size())}, v};
}

Tensor Tensor::matrix(const MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), m.rows(), m.cols()) = m;
  return t;
}

VectorXd Tensor::as_vector() const {
  require(well_formed(), ErrorCode::kProtocol, "Tensor: data does not match dims");
  return Eigen::Map<const VectorXd>(data.data(), static_cast<Index>(data.size()));
}

MatrixXd Tensor::as_matrix() const {
  require(dims.size() == 2 && well_formed(), ErrorCode::kProtocol,
          "Tensor: expected a well-formed rank-2 payload");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), dims[0], dims[1]);
}

Tensor seed_tensor(std::uint64_t seed) {
  return Tensor::vector(std::vector<double>{static_cast<double>(seed >> 32),
                                            static_cast<double>(seed & 0xffffffffu)});
}

std::uint64_t tensor_seed(const Tensor& t) {
  require(t.dims.size() == 1 && t.dims[0] == 2 && t.well_formed(), ErrorCode::kProtocol,
          "seed payload must be a length-2 vector");
  return (static_cast<std::uint64_t>(t.data[0]) << 32) | static_cast<std::uint64_t>(t.data[1]);
}

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    require(in_.size() - pos_ >= n, ErrorCode::kProtocol, "wire: truncated message");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_party(Writer& w, const PartyId& p) {
  w.u8(static_cast<std::uint8_t>(p.role));
  w.u32(p.index);
}

PartyId read_party(Reader& r) {
  const auto role = r.u8();
  require(role <= 2, ErrorCode::kProtocol, "wire: bad party role " + std::to_string(role));
  return {static_cast<Role>(role), r.u32()};
}

void write_payload(Writer& w, const Tensor& t) {
  require(t.well_formed(), ErrorCode::kProtocol, "wire: tensor data does not match dims");
  w.u32(static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) w.u32(d);
  for (double v : t.data) w.f64(v);
}

}  // namespace

std::vector<std::uint8_t> encode_payload(const Tensor& t) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  write_payload(w, t);
  return out;
}

std::vector<std::uint8_t> encode_body(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(64 + m.kind.size() + 8 * m.payload.data.size());
  Writer w(out);
  w.u64(m.seq);
  w.u8(static_cast<std::uint8_t>(m.phase));
  write_party(w, m.sender);
  write_party(w, m.receiver);
  w.u32(static_cast<std::uint32_t>(m.kind.size()));
  w.bytes(m.kind);
  write_payload(w, m.payload);
  return out;
}

std::vector<std::uint8_t> encode_frame(const Message& m) {
  const auto body = encode_body(m);
  require(body.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kProtocol,
          "wire: message too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + body.size());
  Writer w(out);
  w.u32(static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Message decode_body(std::span<const std::uint8_t> body) {
  Reader r(body);
  Message m;
  m.seq = r.u64();
  const auto phase = r.u8();
  require(phase <= 5, ErrorCode::kProtocol, "wire: bad phase " + std::to_string(phase));
  m.phase = static_cast<Phase>(phase);
  m.sender = read_party(r);
  m.receiver = read_party(r);
  m.kind = r.str(r.u32());
  const auto rank = r.u32();
  require(rank <= 8, ErrorCode::kProtocol, "wire: tensor rank " + std::to_string(rank));
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    m.payload.dims.push_back(r.u32());
    count *= m.payload.dims.back();
  }
  require(r.remaining() == 8 * count, ErrorCode::kProtocol,
          "wire: payload length does not match shape header");
  m.payload.data.resize(count);
  for (auto& v : m.payload.data) v = r.f64();
  return m;
}

bool decode_frame(std::vector<std::uint8_t>& buffer, Message& out) {
  if (buffer.size() < 4) return false;
  const std::uint32_t len = (std::uint32_t{buffer[0]} << 24) | (std::uint32_t{buffer[1]} << 16) |
                            (std::uint32_t{buffer[2]} << 8) | std::uint32_t{buffer[3]};
  if (buffer.size() < 4 + static_cast<std::size_t>(len)) return false;
  out = decode_body(std::span<const std::uint8_t>(buffer.data() + 4, len));
  buffer.erase(buffer.begin(), buffer.begin() + 4 + len);
  return true;
}

std::string payload_digest(const Tensor& t) {
  const auto bytes = encode_payload(t);
  Sha256 h;
  h.update(std::span<const std::uint8_t>(bytes.data(), bytes.size()));
  return Sha256::hex(h.finish());
}

}  // namespace freda::protocol
