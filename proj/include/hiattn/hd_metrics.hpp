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

#include "hiattn/latent.hpp"

namespace hiattn {

/// Detail lost under downsample/upsample round trips by 2^k, k = 3, 4, 5.
struct HdMseResult {
  static constexpr std::array<int, 3> kExponents = {3, 4, 5};
  std::array<double, 3> per_factor{};
  double total = 0.0;
};

/// For each k: bilinear-resample each frame to ceil(H / 2^k) x ceil(W / 2^k),
/// resample back to H x W, and take the mean squared error over every element
/// against the input. Channels are treated as independent colour planes.
/// Requires H, W >= 32. Computed in double.
HdMseResult hd_mse(const VideoLatent& v);

}  // namespace hiattn
