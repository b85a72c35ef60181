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

// freda command-line tool.
//
//   freda gen-data --config run.toml --out data/
//   freda run      --config run.toml [--clients N] [--transport memory|socket] [--out dir]
//   freda oracle   --config run.toml [--out dir]
//   freda compare  a/results.csv b/results.csv ...
//   freda audit    out/transcript.jsonl [--sentinels data.csv ...]
//
// --seed overrides the master seed. FREDA_LOG_LEVEL sets verbosity
// (trace, debug, info, warn, error, off; default warn).
//
// Exit codes: 0 success, 1 audit violations, 2 errors.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "freda/datamodel.hpp"
#include "freda/protocol/audit.hpp"
#include "freda/protocol/config.hpp"
#include "freda/protocol/engine.hpp"
#include "freda/protocol/pipeline.hpp"

namespace fs = std::filesystem;
using namespace freda;
using namespace freda::protocol;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("freda");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FREDA_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("FREDA_LOG_LEVEL: unknown level '{}', keeping warn", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  RunConfig cfg = load_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  require(cfg.mode == "synthetic", ErrorCode::kConfig, "mode: gen-data needs mode = \"synthetic\"");
  const auto inputs = build_inputs(cfg);
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + out.string() + ": " + ec.message());
  for (std::size_t i = 0; i < inputs.sources.size(); ++i)
    data::write_csv(out / ("source_" + std::to_string(i) + ".csv"), inputs.sources[i]);
  data::write_csv(out / "source.csv", data::concat_rows(inputs.sources));
  data::write_csv(out / "target.csv", inputs.target);
  {
    std::ofstream sims(out / "similarities.csv", std::ios::binary);
    require(static_cast<bool>(sims), ErrorCode::kIo, "cannot write similarities.csv");
    sims << "domain_id,similarity\n";
    for (std::size_t d = 0; d < inputs.similarities.size(); ++d)
      sims << d << ',' << data::format_double(inputs.similarities[d]) << "\n";
  }
  std::cout << "wrote " << inputs.sources.size() << " source shard(s) (";
  for (std::size_t i = 0; i < inputs.sources.size(); ++i)
    std::cout << (i ? "/" : "") << inputs.sources[i].rows();
  std::cout << " rows), target " << inputs.target.rows() << " rows in "
            << inputs.target.domain_count() << " domain(s), P = " << inputs.target.cols()
            << " -> " << out.string() << "\n";
  return 0;
}

int cmd_run(RunConfig cfg, const std::optional<int>& clients,
            const std::optional<std::string>& transport, const std::optional<std::string>& out) {
  if (clients) cfg.protocol.n_source_clients = *clients;
  if (transport) cfg.transport.kind = *transport;
  if (out) cfg.out_dir = *out;
  cfg.validate();
  const auto inputs = build_inputs(cfg);
  RunOptions opt;
  opt.transport = cfg.transport.kind;
  opt.concurrent = cfg.transport.concurrent;
  const auto result = run_protocol(cfg, inputs, opt);
  const auto audit = audit_transcript(result.transcript, collect_sentinels(inputs, cfg));
  write_run_outputs(cfg.out_dir, cfg, result, audit);
  std::cout << result.metrics_csv();
  std::cout << "# results_digest=" << result.digest() << "\n";
  std::cout << "# audit=" << (audit.clean() ? "clean" : "violations") << " -> "
            << (fs::path(cfg.out_dir) / "audit.txt").string() << "\n";
  if (!audit.clean()) {
    std::cerr << audit.text();
    return 1;
  }
  return 0;
}

int cmd_oracle(const RunConfig& cfg, const std::optional<std::string>& out) {
  const auto result = run_oracle(cfg, build_inputs(cfg));
  write_oracle_outputs(out ? fs::path(*out) : fs::path(cfg.out_dir), result);
  std::cout << result.metrics_csv();
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths) {
  std::vector<ResultTable> tables;
  for (const auto& p : paths) tables.push_back(read_results(p));
  std::cout << compare_results(tables);
  return 0;
}

int cmd_audit(const std::string& transcript, const std::vector<std::string>& sentinels) {
  const auto t = Transcript::read(transcript);
  const auto report = audit_transcript(t, sentinels_from_csv(sentinels));
  std::cout << report.text();
  return report.clean() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"freda: federated domain adaptation for regression"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the master seed");

  std::string config;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic source/target CSV files");
  gen->add_option("--config", config, "Run configuration")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::optional<int> clients;
  std::optional<std::string> transport, run_out;
  auto* run = app.add_subcommand("run", "Run the federated protocol");
  run->add_option("--config", config, "Run configuration")->required();
  run->add_option("--clients", clients, "Number of source clients");
  run->add_option("--transport", transport, "memory or socket");
  run->add_option("--out", run_out, "Output directory");

  std::optional<std::string> oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Run the centralized plaintext pipeline");
  oracle->add_option("--config", config, "Run configuration")->required();
  oracle->add_option("--out", oracle_out, "Output directory");

  std::vector<std::string> results;
  auto* compare = app.add_subcommand("compare", "Join result tables and print deltas");
  compare->add_option("results", results, "results.csv files")->required()->expected(2, -1);

  std::string transcript;
  std::vector<std::string> sentinels;
  auto* audit = app.add_subcommand("audit", "Audit a transcript");
  audit->add_option("transcript", transcript, "transcript.jsonl")->required();
  audit->add_option("--sentinels", sentinels, "CSV files with plaintext values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(load(config, seed), out_dir);
    if (*run) return cmd_run(load(config, seed), clients, transport, run_out);
    if (*oracle) return cmd_oracle(load(config, seed), oracle_out);
    if (*compare) return cmd_compare(results);
    if (*audit) return cmd_audit(transcript, sentinels);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
