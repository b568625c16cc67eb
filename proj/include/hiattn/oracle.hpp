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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hiattn/attention.hpp"
#include "hiattn/block.hpp"
#include "hiattn/latent.hpp"

namespace hiattn {

/// Largest token count (T * H * W) the reference block accepts by default.
inline constexpr std::int64_t kOracleTokenLimit = 16384;

/// The shared attention + FFN sub-block applied to all T*H*W tokens of each
/// batch element at once. Throws kResourceLimit above `token_limit`.
VideoLatent full_attention_block(const VideoLatent& z, const AttentionWeights& w,
                                 const ExecContext& ctx = {},
                                 std::int64_t token_limit = kOracleTokenLimit);

/// Literal per-pixel half-pixel bilinear resize of one row-major H x W frame,
/// evaluated in double as the four-corner weighted sum.
std::vector<double> brute_force_resample(std::span<const double> frame, std::int64_t height,
                                         std::int64_t width, std::int64_t h_out,
                                         std::int64_t w_out);

struct EquivalenceReport {
  std::string config;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

EquivalenceReport compare_latents(const VideoLatent& got, const VideoLatent& want,
                                  double tolerance, std::string config = {});

/// Parameters that turn every branch of a single_window() block into an exact
/// replica of the full-attention sub-block: B = 0 adapters, factor-1
/// averaging compressions, identity decompressions, and gates whose final
/// layer is zero so alpha = 0.5.
BlockParams neutral_params(const BlockConfig& cfg, std::uint64_t seed);

struct DegenerateOptions {
  double timestep = 500.0;
  /// Added to one weight used only by the decomposed path (the global
  /// decompression centre tap for channel 0).
  double perturbation = 0.0;
  int threads = 1;
};

/// Runs block_forward on the single-window block and full_attention_block on
/// the same base weights, reporting the difference. Never throws on mismatch.
EquivalenceReport assert_degenerate_equivalence(std::uint64_t seed, const Dims& dims,
                                                double tolerance,
                                                const DegenerateOptions& opts = {});

}  // namespace hiattn
