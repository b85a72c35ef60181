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
#include <string>
#include <vector>

#include "freda/datamodel.hpp"
#include "freda/gpr.hpp"

namespace freda::protocol {

// Everything a run needs. Parsed from a TOML-style file:
//
//   mode = "synthetic"        # or "files"
//   seed = 7
//   [synthetic]  n_source_total, n_target, p, n_target_domains,
//                shift_strength, noise_sd, support_size, rank,
//                latent_noise, n_shifted
//   [files]      source, target, similarities
//   [protocol]   n_source_clients, k, hp_weighted
//   [gpr]        sigma_lo, sigma_hi, max_evals, fixed_sigma_p2, fixed_sigma_n2
//   [flake]      d                 (0 means 2P)
//   [wen]        alpha, rounds, epochs, eta0, eta_final
//   [lambda]     grid_size, ratio, t1, t2, fit_space, sweep,
//                min_samples, sweep_size
//   [enls]       folds
//   [transport]  kind, concurrent
//   [output]     inline_payloads
struct RunConfig {
  std::string mode = "synthetic";
  std::uint64_t seed = 0;
  std::string out_dir = "freda_out";
  std::string label_transform = "none";  // none | age
  double y_adult = 20.0;

  data::SyntheticConfig synthetic = default_synthetic();

  struct Files {
    std::string source;        // labelled CSV, split across the source clients
    std::string target;        // CSV, labels used for t1 selection and scoring
    std::string similarities;  // CSV: domain_id,similarity
  } files;

  struct Protocol {
    int n_source_clients = 2;
    double k = 3.0;
    bool hp_weighted = false;  // weight hyper-parameter averages by n_i
  } protocol;

  struct Gpr {
    double sigma_lo = 1e-6;
    double sigma_hi = 1e3;
    int max_evals = 400;
    // Both > 0: skip the search and use these values for every feature.
    double fixed_sigma_p2 = 0;
    double fixed_sigma_n2 = 0;
    bool fixed() const { return fixed_sigma_p2 > 0; }
  } gpr;

  struct Flake {
    int d = 0;
  } flake;

  struct Wen {
    double alpha = 0.8;
    int rounds = 100;
    int epochs = 20;
    double eta0 = 1e-4;
    double eta_final = 1e-5;
  } wen;

  struct Lambda {
    int grid_size = 20;
    double ratio = 1e-4;
    std::vector<int> t1{2, 3, 4};
    std::vector<int> t2{0, 1};
    std::string fit_space = "log";  // log | linear
    bool sweep = false;
    int min_samples = 20;
    int sweep_size = 3;
  } lambda;

  struct Enls {
    int folds = 10;
  } enls;

  struct TransportCfg {
    std::string kind = "memory";  // memory | socket
    bool concurrent = false;
  } transport;

  struct Output {
    bool inline_payloads = false;
  } output;

  static data::SyntheticConfig default_synthetic();

  gpr::OptimBounds bounds() const;
  // Lifted dimension for P usable features.
  Index lifted_dim(Index p) const { return flake.d > 0 ? flake.d : 2 * p; }

  // Field-path errors (ErrorCode::kConfig) for anything out of range.
  void validate() const;
  std::string canonical() const;
  std::string digest() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace freda::protocol
