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

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "freda/datamodel.hpp"
#include "freda/protocol/pipeline.hpp"
#include "freda/protocol/transcript.hpp"

namespace fs = std::filesystem;
using namespace freda;
using namespace freda::protocol;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(FREDA_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("freda_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "run.toml";
    std::ofstream(config_) << R"(seed = 4
[synthetic]
n_source_total = 200
n_target = 25
p = 10
shift_strength = [0.0, 0.8, 0.0, 0.5, 1.0]
support_size = 4
n_shifted = 4
[wen]
rounds = 10
epochs = 5
[lambda]
grid_size = 5
[enls]
folds = 5
[output]
inline_payloads = true
)";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  fs::path config_;
};

}  // namespace

TEST_F(Cli, GenDataIsDeterministic) {
  const auto a = cli("gen-data --config " + config_.string() + " --out " + path("a"));
  ASSERT_EQ(a.code, 0) << a.out;
  const auto b = cli("gen-data --config " + config_.string() + " --out " + path("b"));
  ASSERT_EQ(b.code, 0);
  for (const char* f : {"source_0.csv", "source_1.csv", "source.csv", "target.csv",
                        "similarities.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(data::read_csv(dir_ / "a" / "source_0.csv").rows(), 100);
  EXPECT_EQ(data::read_csv(dir_ / "a" / "source_1.csv").rows(), 100);
  const auto target = data::read_csv(dir_ / "a" / "target.csv");
  EXPECT_EQ(std::set<int>(target.domain_ids.begin(), target.domain_ids.end()).size(), 5u);
  EXPECT_NE(a.out.find("100/100"), std::string::npos) << a.out;
}

TEST_F(Cli, RunWritesOutputsAndReruns) {
  const auto a = cli("run --config " + config_.string() + " --out " + path("r1"));
  ASSERT_EQ(a.code, 0) << a.out;
  for (const char* f : {"results.csv", "transcript.jsonl", "audit.txt", "models.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "r1" / f)) << f;
  EXPECT_NE(a.out.find("# audit=clean"), std::string::npos);
  const auto b = cli("run --config " + config_.string() + " --out " + path("r2"));
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir_ / "r1" / "results.csv"), slurp(dir_ / "r2" / "results.csv"));
  EXPECT_EQ(a.out, b.out.substr(0, b.out.find("# audit=")) + a.out.substr(a.out.find("# audit=")));

  // socket transport: same numbers
  const auto s = cli("run --config " + config_.string() + " --transport socket --out " +
                     path("r3"));
  ASSERT_EQ(s.code, 0);
  EXPECT_EQ(slurp(dir_ / "r1" / "results.csv"), slurp(dir_ / "r3" / "results.csv"));

  // more clients: same schema, different shard structure
  const auto c = cli("run --config " + config_.string() + " --clients 8 --out " + path("r4"));
  ASSERT_EQ(c.code, 0);
  const auto t1 = read_results(dir_ / "r1" / "results.csv");
  const auto t4 = read_results(dir_ / "r4" / "results.csv");
  ASSERT_EQ(t1.rows.size(), t4.rows.size());
  for (std::size_t i = 0; i < t1.rows.size(); ++i) EXPECT_EQ(t1.rows[i].domain, t4.rows[i].domain);
  std::set<std::string> k1, k4;
  for (const auto& [k, v] : t1.meta) k1.insert(k);
  for (const auto& [k, v] : t4.meta) k4.insert(k);
  EXPECT_EQ(k1, k4);
  EXPECT_NE(t1.meta.at("config_digest"), t4.meta.at("config_digest"));

  // --seed overrides the master seed
  const auto r = cli("--seed 99 run --config " + config_.string() + " --out " + path("r5"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_results(dir_ / "r5" / "results.csv").meta.at("master_seed"), "99");
}

TEST_F(Cli, OracleAndCompare) {
  ASSERT_EQ(cli("run --config " + config_.string() + " --out " + path("r")).code, 0);
  const auto o = cli("oracle --config " + config_.string() + " --out " + path("o"));
  ASSERT_EQ(o.code, 0) << o.out;
  ASSERT_TRUE(fs::exists(dir_ / "o" / "oracle_results.csv"));
  EXPECT_EQ(read_results(dir_ / "o" / "oracle_results.csv").meta.at("pipeline"), "oracle");

  const auto self = cli("compare " + path("r/results.csv") + " " + path("r/results.csv"));
  ASSERT_EQ(self.code, 0);
  std::istringstream lines(self.out);
  std::string line;
  bool header = true;
  int rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
  }
  EXPECT_EQ(rows, 2);
  const auto both = cli("compare " + path("r/results.csv") + " " + path("o/oracle_results.csv"));
  EXPECT_EQ(both.code, 0) << both.out;
  EXPECT_EQ(cli("compare " + path("r/results.csv") + " " + path("missing.csv")).code, 2);
  EXPECT_NE(cli("compare " + path("r/results.csv")).code, 0);
}

TEST_F(Cli, AuditCleanAndTampered) {
  ASSERT_EQ(cli("gen-data --config " + config_.string() + " --out " + path("data")).code, 0);
  ASSERT_EQ(cli("run --config " + config_.string() + " --out " + path("r")).code, 0);
  const std::string sent = " --sentinels " + path("data/source.csv") + " " + path("data/target.csv");
  const auto clean = cli("audit " + path("r/transcript.jsonl") + sent);
  EXPECT_EQ(clean.code, 0) << clean.out;
  EXPECT_NE(clean.out.find("masked"), std::string::npos) << clean.out;

  auto t = Transcript::read(dir_ / "r" / "transcript.jsonl");
  const auto source = data::read_csv(dir_ / "data" / "source.csv");
  std::uint64_t seq = 0;
  for (auto& e : t.mutable_entries()) {
    if (e.message.kind == "xty_share") {
      e.message.payload.data[0] = source.features(5, 1);
      seq = e.message.seq;
      break;
    }
  }
  t.write(dir_ / "tampered.jsonl", true);
  const auto bad = cli("audit " + path("tampered.jsonl") + sent);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("seq " + std::to_string(seq) + " "), std::string::npos) << bad.out;
  EXPECT_EQ(cli("audit " + path("nothing.jsonl")).code, 2);
}

TEST_F(Cli, BadInputsFailCleanly) {
  std::ofstream(dir_ / "bad.toml") << "[wen]\nalpha = 2\n";
  EXPECT_EQ(cli("run --config " + path("bad.toml")).code, 2);
  std::ofstream(dir_ / "unknown.toml") << "colour = 1\n";
  EXPECT_EQ(cli("run --config " + path("unknown.toml")).code, 2);
  EXPECT_EQ(cli("run --config " + path("absent.toml")).code, 2);
  EXPECT_NE(cli("run").code, 0);
  EXPECT_NE(cli("").code, 0);
  EXPECT_EQ(cli("run --config " + config_.string() + " --transport pigeon").code, 2);
}
