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

#include "hiattn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hiattn {

VideoLatent full_attention_block(const VideoLatent& z, const AttentionWeights& w,
                                 const ExecContext& ctx, std::int64_t token_limit) {
  const Dims& d = z.dims();
  if (d.tokens() > token_limit) {
    throw Error(ErrorKind::kResourceLimit,
                "full attention over " + std::to_string(d.tokens()) +
                    " tokens exceeds the oracle limit of " + std::to_string(token_limit));
  }
  if (d.channels != w.dim()) {
    throw_invalid("latent has D=" + std::to_string(d.channels) + ", weights have D=" +
                  std::to_string(w.dim()));
  }
  const ExecContext fctx = ctx.with_branch(Branch::kFull);
  VideoLatent out(d);
  for (std::int64_t b = 0; b < d.batch; ++b) {
    Mat<float> tokens(d.tokens(), d.channels);
    std::int64_t row = 0;
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t h = 0; h < d.height; ++h)
        for (std::int64_t x = 0; x < d.width; ++x, ++row)
          for (std::int64_t c = 0; c < d.channels; ++c) tokens(row, c) = z.at(b, t, h, x, c);
    const Mat<float> y = transformer_sublayer(tokens, w, &fctx);
    row = 0;
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t h = 0; h < d.height; ++h)
        for (std::int64_t x = 0; x < d.width; ++x, ++row)
          for (std::int64_t c = 0; c < d.channels; ++c) out.at(b, t, h, x, c) = y(row, c);
  }
  return out;
}

std::vector<double> brute_force_resample(std::span<const double> frame, std::int64_t height,
                                         std::int64_t width, std::int64_t h_out,
                                         std::int64_t w_out) {
  if (height < 1 || width < 1 || h_out < 1 || w_out < 1) {
    throw_invalid("brute_force_resample extents must be >= 1");
  }
  if (static_cast<std::int64_t>(frame.size()) != height * width) {
    throw_invalid("frame size does not match H x W");
  }
  std::vector<double> out(static_cast<std::size_t>(h_out * w_out));
  for (std::int64_t oy = 0; oy < h_out; ++oy) {
    for (std::int64_t ox = 0; ox < w_out; ++ox) {
      double sy = (oy + 0.5) * static_cast<double>(height) / static_cast<double>(h_out) - 0.5;
      double sx = (ox + 0.5) * static_cast<double>(width) / static_cast<double>(w_out) - 0.5;
      if (sy < 0.0) sy = 0.0;
      if (sy > height - 1.0) sy = height - 1.0;
      if (sx < 0.0) sx = 0.0;
      if (sx > width - 1.0) sx = width - 1.0;
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t y1 = y0 + 1 < height ? y0 + 1 : y0;
      const std::int64_t x1 = x0 + 1 < width ? x0 + 1 : x0;
      const double wy = sy - static_cast<double>(y0);
      const double wx = sx - static_cast<double>(x0);
      const double v = (1.0 - wy) * (1.0 - wx) * frame[static_cast<std::size_t>(y0 * width + x0)] +
                       (1.0 - wy) * wx * frame[static_cast<std::size_t>(y0 * width + x1)] +
                       wy * (1.0 - wx) * frame[static_cast<std::size_t>(y1 * width + x0)] +
                       wy * wx * frame[static_cast<std::size_t>(y1 * width + x1)];
      out[static_cast<std::size_t>(oy * w_out + ox)] = v;
    }
  }
  return out;
}

EquivalenceReport compare_latents(const VideoLatent& got, const VideoLatent& want,
                                  double tolerance, std::string config) {
  EquivalenceReport r;
  r.config = std::move(config);
  r.tolerance = tolerance;
  if (!(got.dims() == want.dims())) {
    r.max_abs_diff = std::numeric_limits<double>::infinity();
    r.max_rel_diff = std::numeric_limits<double>::infinity();
    r.pass = false;
    return r;
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double a = got.data()[i];
    const double b = want.data()[i];
    const double diff = std::abs(a - b);
    r.max_abs_diff = std::max(r.max_abs_diff, diff);
    r.max_rel_diff = std::max(r.max_rel_diff, diff / std::max(std::abs(b), 1e-30));
  }
  if (std::isnan(r.max_abs_diff)) r.max_abs_diff = std::numeric_limits<double>::infinity();
  r.pass = r.max_abs_diff <= tolerance;
  return r;
}

BlockParams neutral_params(const BlockConfig& cfg, std::uint64_t seed) {
  BlockParams p = BlockParams::init(cfg, seed);
  for (FusionGate* g : {&p.global_gate, &p.local_gate}) {
    g->mlp.w2.setZero();
    g->mlp.b2.setZero();
  }
  return p;
}

EquivalenceReport assert_degenerate_equivalence(std::uint64_t seed, const Dims& dims,
                                                double tolerance,
                                                const DegenerateOptions& opts) {
  const BlockConfig cfg = BlockConfig::single_window(dims.channels);
  BlockParams p = neutral_params(cfg, seed);
  if (opts.perturbation != 0.0) {
    float& tap = p.global_decompress.w(p.global_decompress.center_tap(), 0, 0);
    tap += static_cast<float>(opts.perturbation);
  }
  const VideoLatent z = random_latent(dims, seed);
  ExecContext ctx;
  ctx.threads = opts.threads;
  const VideoLatent decomposed = block_forward(z, opts.timestep, cfg, p, ctx);
  const VideoLatent reference = full_attention_block(z, p.base, ctx);
  std::ostringstream desc;
  desc << "single-window block, dims " << to_string(dims) << ", seed " << seed << ", t "
       << opts.timestep;
  return compare_latents(decomposed, reference, tolerance, desc.str());
}

}  // namespace hiattn
