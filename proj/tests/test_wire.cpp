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

#include <cstring>
#include <filesystem>
#include <limits>
#include <thread>

#include <gtest/gtest.h>

#include "freda/protocol/message.hpp"
#include "freda/protocol/transcript.hpp"
#include "freda/protocol/transport.hpp"
#include "freda/rng.hpp"

using namespace freda;
using namespace freda::protocol;

namespace {

Message sample(std::uint64_t seq, const Tensor& t, const std::string& kind = "masked_data") {
  Message m;
  m.seq = seq;
  m.phase = Phase::kFeatureModels;
  m.sender = PartyId::source(3);
  m.receiver = PartyId::aggregator();
  m.kind = kind;
  m.payload = t;
  return m;
}

std::vector<Tensor> tensors() {
  Prng prng(1);
  std::vector<Tensor> out;
  out.push_back(Tensor::scalar(-0.0));
  out.push_back(Tensor::scalar(std::numeric_limits<double>::denorm_min()));
  out.push_back(Tensor::vector(std::vector<double>{}));
  out.push_back(Tensor::vector(VectorXd(prng.normal_matrix(7, 1).col(0))));
  out.push_back(Tensor::matrix(prng.normal_matrix(3, 5)));
  out.push_back(Tensor::matrix(MatrixXd(0, 4)));
  out.push_back(Tensor{{2, 1, 3}, {1, 2, 3, 4, 5, 6}});
  out.push_back(seed_tensor(0xFEDCBA9876543210ULL));
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

}  // namespace

TEST(Party, StrParseAndOrder) {
  for (const auto& p : {PartyId::aggregator(), PartyId::source(0), PartyId::source(12),
                        PartyId::target()})
    EXPECT_EQ(PartyId::parse(p.str()), p);
  EXPECT_EQ(PartyId::source(2).str(), "source:2");
  EXPECT_LT(PartyId::aggregator(), PartyId::source(0));
  EXPECT_LT(PartyId::source(0), PartyId::source(1));
  EXPECT_LT(PartyId::source(100), PartyId::target());
  EXPECT_THROW(PartyId::parse("source:"), Error);
  EXPECT_THROW(PartyId::parse("source:x"), Error);
  EXPECT_THROW(PartyId::parse("server"), Error);
  for (int i = 0; i <= 5; ++i)
    EXPECT_EQ(parse_phase(phase_name(static_cast<Phase>(i))), static_cast<Phase>(i));
  EXPECT_THROW(parse_phase("phase9"), Error);
}

TEST(Tensor, ConversionsAndSeeds) {
  Prng prng(2);
  const MatrixXd m = prng.normal_matrix(4, 3);
  const Tensor t = Tensor::matrix(m);
  EXPECT_EQ(t.rows(), 4u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.as_matrix(), m);
  // row-major layout
  EXPECT_EQ(t.data[1], m(0, 1));
  EXPECT_EQ(Tensor::vector(VectorXd(m.col(0))).as_vector(), VectorXd(m.col(0)));
  EXPECT_THROW(Tensor::vector(VectorXd(m.col(0))).as_matrix(), Error);
  for (std::uint64_t s : {0ULL, 1ULL, 0xFFFFFFFFFFFFFFFFULL, 0x8000000000000001ULL})
    EXPECT_EQ(tensor_seed(seed_tensor(s)), s);
  EXPECT_THROW(tensor_seed(Tensor::scalar(1)), Error);
}

TEST(Wire, BodyRoundTripIsLossless) {
  std::uint64_t seq = 0;
  for (const auto& t : tensors()) {
    for (const auto& kind : {std::string("x"), std::string(""), std::string("coef_share")}) {
      const Message m = sample(seq++ * 0x100000001ULL, t, kind);
      const auto body = encode_body(m);
      const Message back = decode_body(body);
      EXPECT_EQ(back, m);
      // bitwise, so -0.0 and denormals survive
      ASSERT_EQ(back.payload.data.size(), m.payload.data.size());
      if (!m.payload.data.empty())
        EXPECT_EQ(std::memcmp(back.payload.data.data(), m.payload.data.data(),
                              8 * m.payload.data.size()),
                  0);
    }
  }
}

TEST(Wire, LayoutIsBigEndian) {
  const Message m = sample(0x0102030405060708ULL, Tensor::scalar(1.0), "ab");
  const auto frame = encode_frame(m);
  ASSERT_GE(frame.size(), 4u);
  EXPECT_EQ(be32(frame.data()), frame.size() - 4);
  const std::uint8_t* b = frame.data() + 4;
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b[i], i + 1);
  EXPECT_EQ(b[8], 1);   // phase
  EXPECT_EQ(b[9], 1);   // sender role: source
  EXPECT_EQ(be32(b + 10), 3u);
  EXPECT_EQ(b[14], 0);  // receiver role: aggregator
  EXPECT_EQ(be32(b + 15), 0u);
  EXPECT_EQ(be32(b + 19), 2u);
  EXPECT_EQ(b[23], 'a');
  EXPECT_EQ(b[24], 'b');
  EXPECT_EQ(be32(b + 25), 0u);  // rank 0
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(b[29], 0x3F);
  EXPECT_EQ(b[30], 0xF0);
  EXPECT_EQ(frame.size(), 4u + 29u + 8u);
}

TEST(Wire, FramesStreamAndPartialBuffers) {
  std::vector<std::uint8_t> stream;
  std::vector<Message> sent;
  std::uint64_t seq = 0;
  for (const auto& t : tensors()) {
    sent.push_back(sample(seq++, t));
    const auto f = encode_frame(sent.back());
    stream.insert(stream.end(), f.begin(), f.end());
  }
  // feed one byte at a time
  std::vector<std::uint8_t> buffer;
  std::vector<Message> got;
  for (auto byte : stream) {
    buffer.push_back(byte);
    Message m;
    while (decode_frame(buffer, m)) got.push_back(m);
  }
  EXPECT_EQ(got, sent);
  EXPECT_TRUE(buffer.empty());
}

TEST(Wire, MalformedInputIsRejected) {
  const auto body = encode_body(sample(1, Tensor::matrix(MatrixXd::Ones(2, 2))));
  for (std::size_t cut : {0ul, 5ul, 20ul, body.size() - 1}) {
    const std::vector<std::uint8_t> truncated(body.begin(), body.begin() + cut);
    EXPECT_THROW(decode_body(truncated), Error) << cut;
  }
  auto extra = body;
  extra.push_back(0);
  EXPECT_THROW(decode_body(extra), Error);
  auto bad_phase = body;
  bad_phase[8] = 9;
  EXPECT_THROW(decode_body(bad_phase), Error);
  auto bad_role = body;
  bad_role[9] = 7;
  EXPECT_THROW(decode_body(bad_role), Error);
  EXPECT_THROW(encode_body(sample(1, Tensor{{3}, {1.0}})), Error);
}

TEST(Transport, MemoryOrdersBySenderThenSeq) {
  const std::vector<PartyId> parties{PartyId::aggregator(), PartyId::source(0),
                                     PartyId::source(1), PartyId::target()};
  for (const std::string kind : {"memory", "socket"}) {
    auto transport = make_transport(kind, parties);
    EXPECT_EQ(transport->name(), kind);
    std::vector<std::thread> threads;
    for (std::uint32_t s = 0; s < 2; ++s)
      threads.emplace_back([&, s] {
        for (std::uint64_t q = 0; q < 50; ++q) {
          Message m = sample(q, Tensor::scalar(static_cast<double>(q)));
          m.sender = PartyId::source(1 - s);
          m.receiver = PartyId::target();
          transport->send(m);
        }
      });
    Message a = sample(7, Tensor::scalar(-1));
    a.sender = PartyId::aggregator();
    a.receiver = PartyId::target();
    transport->send(a);
    for (auto& t : threads) t.join();
    const auto box = transport->drain(PartyId::target());
    ASSERT_EQ(box.size(), 101u) << kind;
    EXPECT_EQ(box[0].sender, PartyId::aggregator());
    for (std::size_t i = 1; i < box.size(); ++i) {
      const auto& prev = box[i - 1];
      const auto& cur = box[i];
      EXPECT_TRUE(prev.sender < cur.sender || (prev.sender == cur.sender && prev.seq < cur.seq))
          << kind << " " << i;
    }
    EXPECT_TRUE(transport->drain(PartyId::target()).empty());
    EXPECT_TRUE(transport->drain(PartyId::source(0)).empty());
    Message stray = sample(0, Tensor::scalar(0));
    stray.receiver = PartyId::source(9);
    EXPECT_THROW(transport->send(stray), Error);
  }
  EXPECT_THROW(make_transport("carrier-pigeon", parties), Error);
}

TEST(Transcript, JsonlRoundTripAndDigest) {
  Transcript tr;
  tr.meta().master_seed = 42;
  tr.meta().config_digest = "abc";
  tr.meta().p = 3;
  tr.meta().d = 6;
  tr.meta().n_sources = 2;
  tr.meta().extra["agg_seed"] = "17";
  std::uint64_t seq = 0;
  for (const auto& t : tensors()) tr.record(sample(seq++, t));
  Message late = sample(0, Tensor::scalar(5));
  late.phase = Phase::kSetup;
  late.sender = PartyId::source(0);
  tr.record(late);

  const Transcript full = Transcript::from_jsonl(tr.to_jsonl(true));
  ASSERT_EQ(full.size(), tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_EQ(full.entries()[i].message, tr.entries()[i].message) << i;
    EXPECT_TRUE(full.entries()[i].payload_present);
    EXPECT_EQ(full.entries()[i].digest, payload_digest(tr.entries()[i].message.payload));
  }
  EXPECT_EQ(full.meta().master_seed, 42u);
  EXPECT_EQ(full.meta().extra.at("agg_seed"), "17");
  EXPECT_EQ(full.digest(), tr.digest());

  const Transcript thin = Transcript::from_jsonl(tr.to_jsonl(false));
  ASSERT_EQ(thin.size(), tr.size());
  EXPECT_FALSE(thin.entries()[0].payload_present);
  EXPECT_EQ(thin.digest(), tr.digest());

  // order of recording does not matter once normalized
  Transcript shuffled;
  shuffled.meta() = tr.meta();
  for (auto it = tr.entries().rbegin(); it != tr.entries().rend(); ++it)
    shuffled.record(it->message);
  EXPECT_EQ(shuffled.digest(), tr.digest());
  Transcript normalized = shuffled;
  normalized.normalize();
  EXPECT_EQ(normalized.entries().front().message.phase, Phase::kSetup);

  Transcript changed = tr;
  changed.mutable_entries()[3].message.payload.data[0] += 1e-12;
  changed.mutable_entries()[3].digest = payload_digest(changed.entries()[3].message.payload);
  EXPECT_NE(changed.digest(), tr.digest());

  const auto path = std::filesystem::temp_directory_path() / "freda_wire_transcript.jsonl";
  tr.write(path, true);
  EXPECT_EQ(Transcript::read(path).digest(), tr.digest());
  std::filesystem::remove(path);
  EXPECT_THROW(Transcript::read(path), Error);
  EXPECT_THROW(Transcript::from_jsonl("{not json\n"), Error);
}
