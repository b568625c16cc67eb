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
#include <vector>

#include "hiattn/exec.hpp"
#include "hiattn/nn_ops.hpp"
#include "hiattn/rng.hpp"

namespace hiattn {

/// Per-channel scale/shift normalisation over D.
struct LayerNormParams {
  RowVec<float> gain;
  RowVec<float> bias;

  static LayerNormParams identity(std::int64_t dim);
};

inline constexpr float kLayerNormEps = 1e-5f;

/// Projections of one attention + FFN sub-block, applied to row-vector
/// tokens (y = x W). FFN: silu(x W_in + b_in) W_out + b_out.
struct AttentionWeights {
  int heads = 1;
  Mat<float> w_q, w_k, w_v, w_o;  // D x D
  Mat<float> ffn_in;              // D x D_ff
  RowVec<float> ffn_in_bias;
  Mat<float> ffn_out;             // D_ff x D
  RowVec<float> ffn_out_bias;
  LayerNormParams norm_attn;
  LayerNormParams norm_ffn;

  std::int64_t dim() const { return w_q.rows(); }
  std::int64_t ffn_dim() const { return ffn_in.cols(); }
  void validate() const;

  /// Uniform init scaled by 1/sqrt(fan_in); identity norms, zero biases.
  static AttentionWeights random(std::int64_t dim, std::int64_t ffn_dim, int heads, Rng& rng);
  /// Identity Q/K/V/O, identity norms and an all-zero FFN.
  static AttentionWeights identity(std::int64_t dim, std::int64_t ffn_dim, int heads = 1);
};

/// Low-rank factors for one weight: delta = a * b, a is in x r, b is r x out.
struct LoRAFactors {
  Mat<float> a;
  Mat<float> b;
};

/// Residual adapters for W_Q, W_K, W_V and both FFN matrices. W_O is never
/// adapted.
struct LoRAAdapter {
  int rank = 0;
  LoRAFactors q, k, v, ffn_in, ffn_out;

  /// A drawn uniformly at `a_scale`, B zero, so the residual starts at 0.
  /// Requires 1 <= rank <= min(in, out) / 4 for every adapted matrix.
  static LoRAAdapter create(std::int64_t dim, std::int64_t ffn_dim, int rank, Rng& rng,
                            float a_scale = 0.02f);
  void validate(std::int64_t dim, std::int64_t ffn_dim) const;
};

/// w + a * b for a single matrix.
Mat<float> lora_merge(const Mat<float>& w, const LoRAFactors& f);

AttentionWeights apply_lora(const AttentionWeights& w, const LoRAAdapter& adapter);

Mat<float> layer_norm(const Mat<float>& x, const LayerNormParams& p);

/// Multi-head scaled dot-product attention over N tokens (rows), followed by
/// W_O. Scores are built in row blocks so memory stays O(block * N).
Mat<float> self_attention(const Mat<float>& tokens, const AttentionWeights& w,
                          const ExecContext* ctx = nullptr);

Mat<float> ffn(const Mat<float>& tokens, const AttentionWeights& w,
               const ExecContext* ctx = nullptr);

/// x + attn(norm_attn(x)), then + ffn(norm_ffn(.)). Every branch and the
/// full-attention reference run exactly this.
Mat<float> transformer_sublayer(const Mat<float>& tokens, const AttentionWeights& w,
                                const ExecContext* ctx = nullptr);

}  // namespace hiattn
