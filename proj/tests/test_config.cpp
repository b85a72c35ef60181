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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "freda/protocol/config.hpp"

using namespace freda;
using namespace freda::protocol;

namespace {

// The message of the config error raised by `text`, or "" if it parses.
std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig) << e.what();
    return e.what();
  }
  return "";
}

bool mentions(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST(Config, DefaultValues) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.mode, "synthetic");
  EXPECT_EQ(c.wen.alpha, 0.8);
  EXPECT_EQ(c.protocol.k, 3.0);
  EXPECT_EQ(c.wen.rounds, 100);
  EXPECT_EQ(c.wen.epochs, 20);
  EXPECT_EQ(c.wen.eta0, 1e-4);
  EXPECT_EQ(c.wen.eta_final, 1e-5);
  EXPECT_EQ(c.lambda.grid_size, 20);
  EXPECT_EQ(c.lambda.ratio, 1e-4);
  EXPECT_EQ(c.lambda.min_samples, 20);
  EXPECT_EQ(c.enls.folds, 10);
  EXPECT_EQ(c.lifted_dim(30), 60);
  EXPECT_EQ(c.transport.kind, "memory");
}

TEST(Config, ParsesEveryTable) {
  const std::string text = R"(
# comment line
mode = "synthetic"
seed = 1_000   # underscores allowed

[synthetic]
n_source_total = 120
n_target = 40
p = 12
shift_strength = [0.0, 0.8, 0.3]
noise_sd = 0.25
support_size = 4
rank = 3
latent_noise = 1.0
n_shifted = 5

[protocol]
n_source_clients = 4
k = 2.5
hp_weighted = true

[gpr]
sigma_lo = 1e-5
sigma_hi = 100.0
max_evals = 50
fixed_sigma_p2 = 2.0
fixed_sigma_n2 = 0.5

[flake]
d = 30

[wen]
alpha = 0.5
rounds = 10
epochs = 3
eta0 = 2e-4
eta_final = 2e-5

[lambda]
grid_size = 8
ratio = 0.01
t1 = [1, 2]
t2 = [0]
fit_space = "linear"
min_samples = 5
sweep_size = 2

[enls]
folds = 4

[transport]
kind = "socket"
concurrent = true

[output]
inline_payloads = true
)";
  const RunConfig c = parse_config(text);
  EXPECT_EQ(c.seed, 1000u);
  EXPECT_EQ(c.synthetic.n_source_total, 120);
  EXPECT_EQ(c.synthetic.p, 12);
  EXPECT_EQ(c.synthetic.n_target_domains, 3);  // follows the shift list
  EXPECT_EQ(c.synthetic.shift_strength, (std::vector<double>{0.0, 0.8, 0.3}));
  EXPECT_EQ(c.synthetic.rank, 3);
  EXPECT_EQ(c.protocol.n_source_clients, 4);
  EXPECT_EQ(c.protocol.k, 2.5);
  EXPECT_TRUE(c.protocol.hp_weighted);
  EXPECT_EQ(c.gpr.max_evals, 50);
  EXPECT_TRUE(c.gpr.fixed());
  EXPECT_EQ(c.gpr.fixed_sigma_n2, 0.5);
  EXPECT_EQ(c.lifted_dim(12), 30);
  EXPECT_EQ(c.wen.alpha, 0.5);
  EXPECT_EQ(c.wen.eta_final, 2e-5);
  EXPECT_EQ(c.lambda.t1, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.lambda.t2, (std::vector<int>{0}));
  EXPECT_EQ(c.lambda.fit_space, "linear");
  EXPECT_EQ(c.enls.folds, 4);
  EXPECT_EQ(c.transport.kind, "socket");
  EXPECT_TRUE(c.transport.concurrent);
  EXPECT_TRUE(c.output.inline_payloads);
}

TEST(Config, LargeSeedsAsStrings) {
  EXPECT_EQ(parse_config("seed = \"18446744073709551615\"").seed, 18446744073709551615ULL);
  EXPECT_TRUE(mentions(config_error("seed = -1"), "seed"));
  EXPECT_TRUE(mentions(config_error("seed = \"abc\""), "seed"));
}

TEST(Config, UnknownKeysAndTablesRejected) {
  EXPECT_TRUE(mentions(config_error("colour = 1"), "colour: unknown key"));
  EXPECT_TRUE(mentions(config_error("[wen]\nalpah = 0.8"), "wen.alpah: unknown key"));
  EXPECT_TRUE(mentions(config_error("[nope]\nx = 1"), "nope.x"));
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  EXPECT_TRUE(mentions(config_error("seed = 1\nseed = 2"), "duplicate"));
  EXPECT_TRUE(mentions(config_error("\n\nmode"), "line 3"));
  EXPECT_TRUE(mentions(config_error("mode = \"synthetic"), "line 1"));
  EXPECT_TRUE(mentions(config_error("[wen\nalpha=1"), "line 1"));
  EXPECT_TRUE(mentions(config_error("wen.alpha = zero"), "line 1"));
}

TEST(Config, TypeErrorsNameTheField) {
  EXPECT_TRUE(mentions(config_error("[wen]\nrounds = 1.5"), "wen.rounds: expected an integer"));
  EXPECT_TRUE(mentions(config_error("[wen]\nalpha = \"x\""), "wen.alpha: expected a number"));
  EXPECT_TRUE(mentions(config_error("mode = 3"), "mode: expected a quoted string"));
  EXPECT_TRUE(mentions(config_error("[lambda]\nsweep = 1"), "lambda.sweep"));
  EXPECT_TRUE(mentions(config_error("[lambda]\nt1 = 1"), "lambda.t1: expected an array"));
  EXPECT_TRUE(mentions(config_error("[wen]\nrounds = 99999999999"), "wen.rounds: out of range"));
}

TEST(Config, RangeErrorsNameTheField) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"mode = \"cloud\"", "mode"},
      {"label_transform = \"log\"", "label_transform"},
      {"[protocol]\nn_source_clients = 0", "protocol.n_source_clients"},
      {"[protocol]\nk = -1", "protocol.k"},
      {"[gpr]\nsigma_lo = 0", "gpr.sigma_lo"},
      {"[gpr]\nsigma_lo = 10\nsigma_hi = 1", "gpr.sigma_lo"},
      {"[gpr]\nmax_evals = 0", "gpr.max_evals"},
      {"[gpr]\nfixed_sigma_p2 = 1.0", "gpr.fixed_sigma_p2"},
      {"[gpr]\nfixed_sigma_p2 = -1.0\nfixed_sigma_n2 = 1.0", "gpr.fixed_sigma_p2"},
      {"[flake]\nd = -1", "flake.d"},
      {"[wen]\nalpha = 0", "wen.alpha"},
      {"[wen]\nalpha = 1.5", "wen.alpha"},
      {"[wen]\nrounds = 0", "wen.rounds"},
      {"[wen]\nepochs = 0", "wen.epochs"},
      {"[wen]\neta_final = 1", "wen.eta_final"},
      {"[lambda]\ngrid_size = 0", "lambda.grid_size"},
      {"[lambda]\nratio = 1", "lambda.ratio"},
      {"[lambda]\nfit_space = \"cubic\"", "lambda.fit_space"},
      {"[lambda]\nmin_samples = 0", "lambda.min_samples"},
      {"[lambda]\nsweep_size = 0", "lambda.sweep_size"},
      {"[lambda]\nt1 = []", "lambda.t1"},
      {"[lambda]\nt2 = []", "lambda.t2"},
      {"[lambda]\nt1 = [2, 2]", "lambda.t1"},
      {"[lambda]\nt1 = [2, 3]\nt2 = [3]", "lambda.t2"},
      {"[lambda]\nt1 = [9]", "lambda"},
      {"[enls]\nfolds = 1", "enls.folds"},
      {"[transport]\nkind = \"smoke\"", "transport.kind"},
      {"[synthetic]\np = 0", "synthetic.p"},
      {"[synthetic]\nnoise_sd = -1", "synthetic.noise_sd"},
      {"mode = \"files\"", "files.source"},
  };
  for (const auto& [text, field] : cases) {
    const std::string err = config_error(text);
    EXPECT_FALSE(err.empty()) << text;
    EXPECT_TRUE(mentions(err, field)) << text << " -> " << err;
  }
}

TEST(Config, FilesMode) {
  const RunConfig c = parse_config(
      "mode = \"files\"\n[files]\nsource = \"s.csv\"\ntarget = \"t.csv\"\n"
      "similarities = \"sim.csv\"\n");
  EXPECT_EQ(c.files.source, "s.csv");
  EXPECT_EQ(c.files.similarities, "sim.csv");
}

TEST(Config, DigestCoversResultsOnly) {
  const RunConfig a = parse_config("seed = 3");
  EXPECT_EQ(a.digest(), parse_config("seed = 3\n# same\n").digest());
  EXPECT_NE(a.digest(), parse_config("seed = 4").digest());
  EXPECT_NE(a.digest(), parse_config("seed = 3\n[wen]\nalpha = 0.7").digest());
  EXPECT_NE(a.digest(), parse_config("seed = 3\n[protocol]\nn_source_clients = 3").digest());
  // transport and output choices leave the numbers unchanged
  EXPECT_EQ(a.digest(), parse_config("seed = 3\n[transport]\nkind = \"socket\"").digest());
  EXPECT_EQ(a.digest(), parse_config("seed = 3\n[output]\ninline_payloads = true").digest());
  EXPECT_EQ(a.digest().size(), 64u);
}

TEST(Config, LoadFromDisk) {
  const auto path = std::filesystem::temp_directory_path() / "freda_config_test.toml";
  {
    std::ofstream out(path);
    out << "seed = 11\n[wen]\nrounds = 7\n";
  }
  const RunConfig c = load_config(path);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.wen.rounds, 7);
  std::filesystem::remove(path);
  try {
    load_config(path);
    FAIL() << "expected an I/O error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}
