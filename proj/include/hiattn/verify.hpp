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
#include <string>
#include <vector>

#include "hiattn/grad.hpp"

namespace hiattn {

/// A scalar composite plus the point it is checked at.
struct GradCase {
  std::string name;
  grad::Composite f;
  std::vector<grad::Tensor> point;
};

/// dot(softmax(x), c) over one row of n logits.
GradCase softmax_dot_case(std::uint64_t seed, std::int64_t n = 8);
/// Pre-norm attention plus FFN sub-layer on one window of `tokens` rows,
/// contracted with a fixed tensor. Every weight is an input.
GradCase attention_subblock_case(std::uint64_t seed, std::int64_t tokens = 8,
                                 std::int64_t dim = 4);
/// depthwise stride-2 compress -> attention -> bilinear back -> conv3d.
GradCase compress_attention_case(std::uint64_t seed);

/// Average pooling computed directly from the definition, in double.
BasicLatent<double> average_pool_oracle(const BasicLatent<double>& z, int k);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured error or count of violations
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Negates one tap of the compression kernel under test; the suite must
  /// then report a failure.
  bool inject_fault = false;
};

/// Partition round trips, pooling-init equality, gate neutrality, boundary
/// disjointness and gradient checks.
std::vector<CheckResult> run_verify_suite(const VerifyOptions& opts = {});

}  // namespace hiattn
