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

#include "hiattn/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>

#include "hiattn/oracle.hpp"

namespace hiattn {
namespace {

using u128 = unsigned __int128;

std::uint64_t narrow(u128 v) {
  if (v > std::numeric_limits<std::uint64_t>::max()) {
    throw_invalid("attention-map cost overflows 64 bits");
  }
  return static_cast<std::uint64_t>(v);
}

void check_shape(const CostShape& s) {
  if (s.frames < 1 || s.height < 1 || s.width < 1 || s.channels < 1) {
    throw_invalid("cost shape extents must be >= 1");
  }
  if (s.K < 1) throw_invalid("K must be >= 1, got " + std::to_string(s.K));
  if (s.height % s.K != 0 || s.width % s.K != 0) {
    throw_invalid("analytic cost needs K | H and K | W (K=" + std::to_string(s.K) + ", H=" +
                  std::to_string(s.height) + ", W=" + std::to_string(s.width) + ")");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

Rational Rational::reduced() const {
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? *this : Rational{num / g, den / g};
}

std::uint64_t analytic_map_cost(const CostShape& s, Branch branch) {
  check_shape(s);
  const u128 n = s.tokens();
  const u128 d = static_cast<u128>(s.channels);
  const u128 k2 = static_cast<u128>(s.K) * static_cast<u128>(s.K);
  const u128 window = n / k2;  // THW / K^2, exact since K | H and K | W
  switch (branch) {
    case Branch::kFull:
      return narrow(n * n * d);
    case Branch::kLocal:
      return narrow(k2 * window * window * d);
    case Branch::kGlobal:
      return narrow(window * window * d);
    case Branch::kHierarchical: {
      const u128 num = n * n * d;
      if (num % (4 * k2) != 0) {
        throw_invalid("hierarchical cost (THW)^2 D / (4K^2) is not an integer for K=" +
                      std::to_string(s.K));
      }
      return narrow(num / (4 * k2));
    }
    case Branch::kOther:
      break;
  }
  throw_invalid("analytic_map_cost has no formula for branch '" +
                std::string(to_string(branch)) + "'");
}

std::uint64_t analytic_decomposed_cost(const CostShape& s) {
  return analytic_map_cost(s, Branch::kLocal) + analytic_map_cost(s, Branch::kGlobal) +
         analytic_map_cost(s, Branch::kHierarchical);
}

std::uint64_t layer_map_cost(const CostShape& s, Branch branch, int layer_index) {
  check_shape(s);
  if (branch == Branch::kFull || branch == Branch::kGlobal) return analytic_map_cost(s, branch);
  if (s.K % 2 != 0) throw_invalid("per-layer costing needs an even K");
  if (layer_index < 0) throw_invalid("layer_index must be >= 0");
  const int parity = layer_index % 2;
  const u128 d = static_cast<u128>(s.channels);
  const u128 t = static_cast<u128>(s.frames);
  u128 sum = 0;
  if (branch == Branch::kLocal) {
    const PartitionSpec spec = make_partition(s.height, s.width, s.K + parity);
    for (int i = 0; i < spec.parts; ++i)
      for (int j = 0; j < spec.parts; ++j) {
        const u128 n = t * static_cast<u128>(spec.window_rows(i) * spec.window_cols(j));
        sum += n * n * d;
      }
    return narrow(sum);
  }
  if (branch == Branch::kHierarchical) {
    const PartitionSpec spec = make_partition(s.height, s.width, s.K / 2 + parity);
    for (int i = 0; i < spec.parts; ++i)
      for (int j = 0; j < spec.parts; ++j) {
        const u128 n = t * static_cast<u128>(((spec.window_rows(i) + 1) / 2) *
                                             ((spec.window_cols(j) + 1) / 2));
        sum += n * n * d;
      }
    return narrow(sum);
  }
  throw_invalid("layer_map_cost has no formula for branch '" + std::string(to_string(branch)) +
                "'");
}

Rational speedup(int K) {
  if (K < 1) throw_invalid("speedup needs K >= 1, got " + std::to_string(K));
  const std::uint64_t k = static_cast<std::uint64_t>(K);
  return Rational{4 * k * k * k * k, 5 * k * k + 4};
}

FlopCounter::Snapshot counted_flops(const BlockConfig& cfg, const VideoLatent& z,
                                    const BlockParams& p, double t) {
  FlopCounter counter;
  ExecContext ctx;
  ctx.flops = &counter;
  (void)block_forward(z, t, cfg, p, ctx);
  return counter.snapshot();
}

FlopCounter::Snapshot counted_full_flops(const VideoLatent& z, const AttentionWeights& w,
                                         std::int64_t token_limit) {
  FlopCounter counter;
  ExecContext ctx;
  ctx.flops = &counter;
  (void)full_attention_block(z, w, ctx, token_limit);
  return counter.snapshot();
}

namespace {

constexpr std::array<Branch, 4> kReportBranches = {Branch::kFull, Branch::kLocal,
                                                   Branch::kGlobal, Branch::kHierarchical};

CostReport analytic_report(const CostShape& shape, int heads) {
  CostReport r;
  r.shape = shape;
  r.heads = heads;
  for (std::size_t i = 0; i < kReportBranches.size(); ++i) {
    r.branches[i].branch = kReportBranches[i];
    r.branches[i].analytic_map = analytic_map_cost(shape, kReportBranches[i]);
  }
  r.analytic_speedup = speedup(shape.K);
  return r;
}

BlockConfig config_for(const CostShape& shape, int heads) {
  BlockConfig cfg = BlockConfig::standard(shape.K, shape.channels, 0);
  cfg.heads = heads;
  cfg.validate();
  cfg.validate_input(Dims{1, shape.frames, shape.height, shape.width, shape.channels});
  return cfg;
}

void fill_counts(CostReport& r, const FlopCounter::Snapshot& full,
                 const FlopCounter::Snapshot& dec) {
  std::uint64_t dec_map = 0;
  std::uint64_t dec_total = 0;
  for (BranchCost& b : r.branches) {
    const FlopCounter::Snapshot& src = b.branch == Branch::kFull ? full : dec;
    b.counted_map = src.map_of(b.branch);
    b.counted_total = src.total_of(b.branch);
    if (b.branch != Branch::kFull) {
      dec_map += *b.counted_map;
      dec_total += *b.counted_total;
    }
  }
  r.counted_map_speedup =
      static_cast<double>(*r.branches[0].counted_map) / static_cast<double>(dec_map);
  r.counted_total_speedup =
      static_cast<double>(*r.branches[0].counted_total) / static_cast<double>(dec_total);
}

}  // namespace

CostReport cost_report(const CostShape& shape, int heads, std::uint64_t seed, bool count) {
  CostReport r = analytic_report(shape, heads);
  if (!count) return r;
  BlockConfig cfg;
  try {
    cfg = config_for(shape, heads);
  } catch (const Error&) {
    return r;
  }
  if (static_cast<std::int64_t>(shape.tokens()) > kOracleTokenLimit) return r;
  const Dims dims{1, shape.frames, shape.height, shape.width, shape.channels};
  const VideoLatent z = random_latent(dims, seed);
  const BlockParams p = BlockParams::init(cfg, seed);
  fill_counts(r, counted_full_flops(z, p.base, kOracleTokenLimit), counted_flops(cfg, z, p));
  return r;
}

CostReport bench(const CostShape& shape, int repeats, std::uint64_t seed, int heads,
                 int threads) {
  if (repeats < 3) {
    throw_invalid("bench needs repeats >= 3, got " + std::to_string(repeats));
  }
  CostReport r = analytic_report(shape, heads);
  r.repeats = repeats;
  const BlockConfig cfg = config_for(shape, heads);
  const Dims dims{1, shape.frames, shape.height, shape.width, shape.channels};
  const VideoLatent z = random_latent(dims, seed);
  const BlockParams p = BlockParams::init(cfg, seed);
  const double t = 500.0;

  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point s) {
    return std::chrono::duration<double, std::milli>(Clock::now() - s).count();
  };

  // Decomposed block: warm-up with counting, then timed repeats.
  FlopCounter dec_counter;
  {
    ExecContext ctx;
    ctx.threads = threads;
    ctx.flops = &dec_counter;
    (void)block_forward(z, t, cfg, p, ctx);
  }
  std::vector<double> total_ms;
  std::array<std::vector<double>, kBranchCount> branch_ms;
  for (int i = 0; i < repeats; ++i) {
    BranchTimes times;
    ExecContext ctx;
    ctx.threads = threads;
    ctx.times = &times;
    const auto start = Clock::now();
    (void)block_forward(z, t, cfg, p, ctx);
    total_ms.push_back(ms_since(start));
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      branch_ms[b].push_back(times.seconds[b] * 1e3);
    }
  }
  r.decomposed_wall_ms = median(total_ms);
  for (BranchCost& b : r.branches) {
    if (b.branch != Branch::kFull) {
      b.wall_ms = median(branch_ms[static_cast<std::size_t>(b.branch)]);
    }
  }

  FlopCounter::Snapshot full_snapshot{};
  if (static_cast<std::int64_t>(shape.tokens()) > kBenchOracleTokenLimit) {
    r.oracle_skipped = true;
  } else {
    FlopCounter full_counter;
    {
      ExecContext ctx;
      ctx.flops = &full_counter;
      (void)full_attention_block(z, p.base, ctx, kBenchOracleTokenLimit);
    }
    full_snapshot = full_counter.snapshot();
    std::vector<double> full_ms;
    for (int i = 0; i < repeats; ++i) {
      const auto start = Clock::now();
      (void)full_attention_block(z, p.base, {}, kBenchOracleTokenLimit);
      full_ms.push_back(ms_since(start));
    }
    r.branches[0].wall_ms = median(full_ms);
    r.measured_speedup = *r.branches[0].wall_ms / *r.decomposed_wall_ms;
  }
  fill_counts(r, full_snapshot, dec_counter.snapshot());
  if (r.oracle_skipped) {
    r.branches[0].counted_map.reset();
    r.branches[0].counted_total.reset();
    r.counted_map_speedup.reset();
    r.counted_total_speedup.reset();
  }
  return r;
}

std::vector<std::string> cost_csv_rows(const CostReport& r) {
  const std::string prefix = std::to_string(r.shape.frames) + "," +
                             std::to_string(r.shape.height) + "," +
                             std::to_string(r.shape.width) + "," +
                             std::to_string(r.shape.channels) + "," + std::to_string(r.shape.K) +
                             ",";
  auto opt_u = [](const std::optional<std::uint64_t>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  auto opt_g = [](const std::optional<double>& v) { return v ? fmt_g6(*v) : std::string(); };
  auto opt_f4 = [](const std::optional<double>& v) { return v ? fmt_fixed4(*v) : std::string(); };
  std::vector<std::string> rows;
  for (const BranchCost& b : r.branches) {
    rows.push_back(prefix + std::string(to_string(b.branch)) + "," +
                   std::to_string(b.analytic_map) + "," + opt_u(b.counted_map) + "," +
                   opt_u(b.counted_total) + "," + opt_g(b.wall_ms));
  }
  rows.push_back(prefix + "speedup," + fmt_fixed4(r.analytic_speedup.value()) + "," +
                 opt_f4(r.counted_map_speedup) + "," + opt_f4(r.counted_total_speedup) + "," +
                 opt_f4(r.measured_speedup));
  return rows;
}

}  // namespace hiattn
