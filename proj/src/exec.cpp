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

#include "hiattn/exec.hpp"

namespace hiattn {

std::string_view to_string(Branch b) noexcept {
  switch (b) {
    case Branch::kFull: return "full";
    case Branch::kLocal: return "local";
    case Branch::kGlobal: return "global";
    case Branch::kHierarchical: return "hierarchical";
    case Branch::kOther: return "other";
  }
  return "other";
}

FlopCounter::Snapshot FlopCounter::snapshot() const noexcept {
  Snapshot s;
  for (std::size_t i = 0; i < kBranchCount; ++i) {
    s.map[i] = map_[i].load(std::memory_order_relaxed);
    s.total[i] = total_[i].load(std::memory_order_relaxed);
  }
  return s;
}

void FlopCounter::reset() noexcept {
  for (std::size_t i = 0; i < kBranchCount; ++i) {
    map_[i].store(0, std::memory_order_relaxed);
    total_[i].store(0, std::memory_order_relaxed);
  }
}

}  // namespace hiattn
