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
#include <random>
#include <string_view>

#include "freda/common.hpp"

namespace freda {

// Derives a named sub-seed from a parent seed (SHA-256 over the parent and
// the label, truncated to 64 bits). Every random stream in a run hangs off
// the master seed through this function.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                          std::uint64_t index);

// Seeded generator with distribution code pinned here rather than in the
// standard library, so streams are identical across toolchains.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second variate is kept for the next call.
  double normal();

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  MatrixXd normal_matrix(Index rows, Index cols);
  MatrixXd uniform_matrix(Index rows, Index cols, double lo, double hi);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace freda
