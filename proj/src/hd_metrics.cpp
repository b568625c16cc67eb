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

#include "hiattn/hd_metrics.hpp"

#include "hiattn/nn_ops.hpp"

namespace hiattn {

HdMseResult hd_mse(const VideoLatent& v) {
  const Dims& d = v.dims();
  if (d.height < 32 || d.width < 32) {
    throw_invalid("hd_mse needs H, W >= 32, got " + std::to_string(d.height) + "x" +
                  std::to_string(d.width));
  }
  const BasicLatent<double> src = v.cast<double>();
  HdMseResult r;
  for (std::size_t i = 0; i < HdMseResult::kExponents.size(); ++i) {
    const std::int64_t factor = std::int64_t{1} << HdMseResult::kExponents[i];
    const std::int64_t h = (d.height + factor - 1) / factor;
    const std::int64_t w = (d.width + factor - 1) / factor;
    const BasicLatent<double> rec =
        bilinear_resample(bilinear_resample(src, h, w), d.height, d.width);
    double sum = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      const double diff = src.data()[j] - rec.data()[j];
      sum += diff * diff;
    }
    r.per_factor[i] = sum / static_cast<double>(src.size());
  }
  r.total = r.per_factor[0] + r.per_factor[1] + r.per_factor[2];
  return r;
}

}  // namespace hiattn
