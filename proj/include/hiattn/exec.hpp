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

#include <algorithm>
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

namespace hiattn {

/// Which attention path a piece of work belongs to, for FLOP and time
/// accounting.
enum class Branch : std::uint8_t { kFull, kLocal, kGlobal, kHierarchical, kOther };
inline constexpr std::size_t kBranchCount = 5;

std::string_view to_string(Branch b) noexcept;

/// Per-run matmul FLOP accumulator. Multiply-add counts as 2 FLOPs, so an
/// (m x k) * (k x n) product adds 2*m*k*n. Attention-map products (scores and
/// score-weighted values) are also tallied separately in `map`.
class FlopCounter {
 public:
  struct Snapshot {
    std::array<std::uint64_t, kBranchCount> map{};
    std::array<std::uint64_t, kBranchCount> total{};

    std::uint64_t map_of(Branch b) const { return map[static_cast<std::size_t>(b)]; }
    std::uint64_t total_of(Branch b) const { return total[static_cast<std::size_t>(b)]; }
  };

  void add(Branch b, std::uint64_t flops, bool attention_map) noexcept {
    const auto i = static_cast<std::size_t>(b);
    total_[i].fetch_add(flops, std::memory_order_relaxed);
    if (attention_map) map_[i].fetch_add(flops, std::memory_order_relaxed);
  }
  Snapshot snapshot() const noexcept;
  void reset() noexcept;

 private:
  std::array<std::atomic<std::uint64_t>, kBranchCount> map_{};
  std::array<std::atomic<std::uint64_t>, kBranchCount> total_{};
};

/// Wall-clock seconds spent per branch during one forward.
struct BranchTimes {
  std::array<double, kBranchCount> seconds{};
  double of(Branch b) const { return seconds[static_cast<std::size_t>(b)]; }
};

/// Evaluation context threaded through forward calls. Copy it to retag work
/// with a different branch.
struct ExecContext {
  int threads = 1;
  FlopCounter* flops = nullptr;
  BranchTimes* times = nullptr;
  Branch branch = Branch::kOther;

  ExecContext with_branch(Branch b) const {
    ExecContext c = *this;
    c.branch = b;
    return c;
  }
  void count(std::uint64_t flops_done, bool attention_map) const noexcept {
    if (flops) flops->add(branch, flops_done, attention_map);
  }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Items are claimed
/// dynamically but each item runs start to finish on one thread, so results
/// do not depend on the schedule.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, threads > 1 ? static_cast<std::size_t>(threads) : 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
          next.store(n);
        }
      });
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace hiattn
