/*
 * Copyright (c) 2026, The hiattn Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hiattn/block.hpp"
#include "hiattn/exec.hpp"

namespace hiattn {

/// Problem size for the attention-map cost model.
struct CostShape {
  std::int64_t frames = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  std::int64_t channels = 1;
  int K = 1;

  std::uint64_t tokens() const {
    return static_cast<std::uint64_t>(frames * height * width);
  }
};

/// Unreduced fraction with exact comparisons by cross-multiplication.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Rational reduced() const;
  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<unsigned __int128>(a.num) * b.den ==
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<unsigned __int128>(a.num) * b.den <
           static_cast<unsigned __int128>(b.num) * a.den;
  }
};

/// Attention-map cost N^2 * D for each branch of an even (unshifted) layer:
///   full         (THW)^2 D
///   local        K^2 (THW/K^2)^2 D
///   global       (THW/K^2)^2 D
///   hierarchical (K/2)^2 (THW/K^2)^2 D = (THW)^2 D / (4K^2)
/// Requires K | H and K | W, and every term to be an exact integer.
/// kOther is rejected; use analytic_decomposed_cost() for the sum.
std::uint64_t analytic_map_cost(const CostShape& s, Branch branch);
std::uint64_t analytic_decomposed_cost(const CostShape& s);

/// Same convention summed window by window over the partitions an actual
/// block uses at `layer_index`, so shifted (K+1)^2 layers are costed
/// exactly. Matches analytic_map_cost on even layers of exact-division
/// shapes.
std::uint64_t layer_map_cost(const CostShape& s, Branch branch, int layer_index);

/// Full-attention over decomposed cost, 4K^4 / (5K^2 + 4).
Rational speedup(int K);

/// Runs block_forward with a counter attached and returns per-branch tallies.
FlopCounter::Snapshot counted_flops(const BlockConfig& cfg, const VideoLatent& z,
                                    const BlockParams& p, double t = 500.0);
/// Same for the full-attention reference (tallied under Branch::kFull).
FlopCounter::Snapshot counted_full_flops(const VideoLatent& z, const AttentionWeights& w,
                                         std::int64_t token_limit);

/// Token limit used for the full-attention timing run in bench().
inline constexpr std::int64_t kBenchOracleTokenLimit = std::int64_t{1} << 17;

struct BranchCost {
  Branch branch = Branch::kOther;
  std::uint64_t analytic_map = 0;
  std::optional<std::uint64_t> counted_map;
  std::optional<std::uint64_t> counted_total;
  std::optional<double> wall_ms;
};

struct CostReport {
  CostShape shape;
  int heads = 1;
  int layer_index = 0;
  int repeats = 0;
  std::array<BranchCost, 4> branches{};  // full, local, global, hierarchical
  Rational analytic_speedup;
  std::optional<double> counted_map_speedup;
  std::optional<double> counted_total_speedup;
  std::optional<double> measured_speedup;
  std::optional<double> decomposed_wall_ms;
  bool oracle_skipped = false;
};

/// Analytic plus counted costs without timing. Counting needs a valid block
/// config for `shape`; otherwise the counted fields are left empty.
CostReport cost_report(const CostShape& shape, int heads = 1, std::uint64_t seed = 0,
                       bool count = true);

/// Median-of-`repeats` timings (after one discarded warm-up) of
/// full_attention_block and block_forward, single-threaded by default.
/// Full-attention timing is skipped, and flagged, above kBenchOracleTokenLimit.
CostReport bench(const CostShape& shape, int repeats, std::uint64_t seed, int heads = 1,
                 int threads = 1);

inline constexpr const char* kCostCsvHeader =
    "T,H,W,D,K,branch,analytic_map,counted_map,counted_total,wall_ms";

/// One row per branch (full, local, global, hierarchical) then a "speedup"
/// row whose numeric columns hold full/decomposed ratios with 4 decimals.
std::vector<std::string> cost_csv_rows(const CostReport& r);

}  // namespace hiattn
