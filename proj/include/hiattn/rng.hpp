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

#include <cstdint>
#include <random>

namespace hiattn {

/// Seeded parameter generator. Same bit-exact rule as random_latent: one
/// mt19937_64 draw per value, top 24 bits mapped to [-1, 1) and scaled.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  float symmetric(float scale) {
    const auto bits = static_cast<std::uint32_t>(gen_() >> 40);
    return scale * (2.0f * (static_cast<float>(bits) * 0x1p-24f) - 1.0f);
  }
  std::uint64_t next() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace hiattn
