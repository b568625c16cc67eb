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

#include "hiattn/attention.hpp"

#include <algorithm>
#include <cmath>

namespace hiattn {
namespace {

Mat<float> random_matrix(std::int64_t rows, std::int64_t cols, float scale, Rng& rng) {
  Mat<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.symmetric(scale);
  return m;
}

void expect_shape(const Mat<float>& m, std::int64_t rows, std::int64_t cols,
                  const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw_invalid(std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                  std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  }
}

void count_matmul(const ExecContext* ctx, std::int64_t m, std::int64_t k, std::int64_t n,
                  bool map) {
  if (ctx) {
    ctx->count(2ull * static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(k) *
                   static_cast<std::uint64_t>(n),
               map);
  }
}

// Upper bound on score-matrix elements held per row block.
constexpr std::int64_t kScoreBudget = std::int64_t{1} << 23;

}  // namespace

LayerNormParams LayerNormParams::identity(std::int64_t dim) {
  return {RowVec<float>::Ones(dim), RowVec<float>::Zero(dim)};
}

void AttentionWeights::validate() const {
  const std::int64_t d = dim();
  if (d < 1) throw_invalid("attention weights need D >= 1");
  if (heads < 1 || d % heads != 0) {
    throw_invalid("heads=" + std::to_string(heads) + " must divide D=" + std::to_string(d));
  }
  expect_shape(w_q, d, d, "W_Q");
  expect_shape(w_k, d, d, "W_K");
  expect_shape(w_v, d, d, "W_V");
  expect_shape(w_o, d, d, "W_O");
  const std::int64_t f = ffn_dim();
  if (f < 1) throw_invalid("FFN hidden width must be >= 1");
  expect_shape(ffn_in, d, f, "FFN in");
  expect_shape(ffn_out, f, d, "FFN out");
  if (ffn_in_bias.size() != f || ffn_out_bias.size() != d) {
    throw_invalid("FFN bias sizes do not match D/D_ff");
  }
  if (norm_attn.gain.size() != d || norm_attn.bias.size() != d ||
      norm_ffn.gain.size() != d || norm_ffn.bias.size() != d) {
    throw_invalid("norm parameters must have D entries");
  }
}

AttentionWeights AttentionWeights::random(std::int64_t dim, std::int64_t ffn_dim, int heads,
                                          Rng& rng) {
  AttentionWeights w;
  w.heads = heads;
  const float s_in = 1.0f / std::sqrt(static_cast<float>(dim));
  const float s_ff = 1.0f / std::sqrt(static_cast<float>(ffn_dim));
  w.w_q = random_matrix(dim, dim, s_in, rng);
  w.w_k = random_matrix(dim, dim, s_in, rng);
  w.w_v = random_matrix(dim, dim, s_in, rng);
  w.w_o = random_matrix(dim, dim, s_in, rng);
  w.ffn_in = random_matrix(dim, ffn_dim, s_in, rng);
  w.ffn_in_bias = RowVec<float>::Zero(ffn_dim);
  w.ffn_out = random_matrix(ffn_dim, dim, s_ff, rng);
  w.ffn_out_bias = RowVec<float>::Zero(dim);
  w.norm_attn = LayerNormParams::identity(dim);
  w.norm_ffn = LayerNormParams::identity(dim);
  w.validate();
  return w;
}

AttentionWeights AttentionWeights::identity(std::int64_t dim, std::int64_t ffn_dim,
                                            int heads) {
  AttentionWeights w;
  w.heads = heads;
  w.w_q = Mat<float>::Identity(dim, dim);
  w.w_k = Mat<float>::Identity(dim, dim);
  w.w_v = Mat<float>::Identity(dim, dim);
  w.w_o = Mat<float>::Identity(dim, dim);
  w.ffn_in = Mat<float>::Zero(dim, ffn_dim);
  w.ffn_in_bias = RowVec<float>::Zero(ffn_dim);
  w.ffn_out = Mat<float>::Zero(ffn_dim, dim);
  w.ffn_out_bias = RowVec<float>::Zero(dim);
  w.norm_attn = LayerNormParams::identity(dim);
  w.norm_ffn = LayerNormParams::identity(dim);
  w.validate();
  return w;
}

LoRAAdapter LoRAAdapter::create(std::int64_t dim, std::int64_t ffn_dim, int rank, Rng& rng,
                                float a_scale) {
  LoRAAdapter ad;
  ad.rank = rank;
  auto make = [&](std::int64_t in, std::int64_t out) {
    return LoRAFactors{random_matrix(in, rank, a_scale, rng), Mat<float>::Zero(rank, out)};
  };
  if (rank < 1 || 4 * static_cast<std::int64_t>(rank) > std::min(dim, ffn_dim)) {
    throw_invalid("LoRA rank r=" + std::to_string(rank) + " violates 1 <= r <= d/4 with d=" +
                  std::to_string(std::min(dim, ffn_dim)));
  }
  ad.q = make(dim, dim);
  ad.k = make(dim, dim);
  ad.v = make(dim, dim);
  ad.ffn_in = make(dim, ffn_dim);
  ad.ffn_out = make(ffn_dim, dim);
  return ad;
}

void LoRAAdapter::validate(std::int64_t dim, std::int64_t ffn_dim) const {
  if (rank < 1 || 4 * static_cast<std::int64_t>(rank) > std::min(dim, ffn_dim)) {
    throw_invalid("LoRA rank r=" + std::to_string(rank) + " violates 1 <= r <= d/4 with d=" +
                  std::to_string(std::min(dim, ffn_dim)));
  }
  auto check = [&](const LoRAFactors& f, std::int64_t in, std::int64_t out, const char* n) {
    expect_shape(f.a, in, rank, n);
    expect_shape(f.b, rank, out, n);
  };
  check(q, dim, dim, "LoRA W_Q");
  check(k, dim, dim, "LoRA W_K");
  check(v, dim, dim, "LoRA W_V");
  check(ffn_in, dim, ffn_dim, "LoRA FFN in");
  check(ffn_out, ffn_dim, dim, "LoRA FFN out");
}

Mat<float> lora_merge(const Mat<float>& w, const LoRAFactors& f) {
  if (f.a.rows() != w.rows() || f.b.cols() != w.cols() || f.a.cols() != f.b.rows()) {
    throw_invalid("LoRA factors " + std::to_string(f.a.rows()) + "x" +
                  std::to_string(f.a.cols()) + " * " + std::to_string(f.b.rows()) + "x" +
                  std::to_string(f.b.cols()) + " do not fit a " + std::to_string(w.rows()) +
                  "x" + std::to_string(w.cols()) + " weight");
  }
  Mat<float> out = w;
  out.noalias() += f.a * f.b;
  return out;
}

AttentionWeights apply_lora(const AttentionWeights& w, const LoRAAdapter& adapter) {
  w.validate();
  adapter.validate(w.dim(), w.ffn_dim());
  AttentionWeights out = w;
  out.w_q = lora_merge(w.w_q, adapter.q);
  out.w_k = lora_merge(w.w_k, adapter.k);
  out.w_v = lora_merge(w.w_v, adapter.v);
  out.ffn_in = lora_merge(w.ffn_in, adapter.ffn_in);
  out.ffn_out = lora_merge(w.ffn_out, adapter.ffn_out);
  return out;
}

Mat<float> layer_norm(const Mat<float>& x, const LayerNormParams& p) {
  const Eigen::Index d = x.cols();
  Mat<float> y(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r).array();
    const float mean = row.sum() / static_cast<float>(d);
    const float var = (row - mean).square().sum() / static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
    y.row(r) = ((row - mean) * inv * p.gain.array() + p.bias.array()).matrix();
  }
  return y;
}

Mat<float> self_attention(const Mat<float>& tokens, const AttentionWeights& w,
                          const ExecContext* ctx) {
  const std::int64_t n = tokens.rows();
  const std::int64_t d = w.dim();
  if (n < 1) throw_invalid("self_attention needs at least one token");
  if (tokens.cols() != d) {
    throw_invalid("tokens have " + std::to_string(tokens.cols()) + " channels, weights " +
                  std::to_string(d));
  }
  const std::int64_t dh = d / w.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Mat<float> q = tokens * w.w_q;
  Mat<float> k = tokens * w.w_k;
  Mat<float> v = tokens * w.w_v;
  for (int i = 0; i < 3; ++i) count_matmul(ctx, n, d, d, false);

  const std::int64_t block = std::clamp<std::int64_t>(kScoreBudget / n, 1, n);
  Mat<float> heads_out(n, d);
  Mat<float> scores;
  for (int h = 0; h < w.heads; ++h) {
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    for (std::int64_t r0 = 0; r0 < n; r0 += block) {
      const std::int64_t rows = std::min(block, n - r0);
      scores.resize(rows, n);
      scores.noalias() = q.block(r0, h * dh, rows, dh) * kh.transpose();
      scores *= scale;
      softmax_rows<float>(scores);
      heads_out.block(r0, h * dh, rows, dh).noalias() = scores * vh;
      count_matmul(ctx, rows, dh, n, true);
      count_matmul(ctx, rows, n, dh, true);
    }
  }
  Mat<float> out = heads_out * w.w_o;
  count_matmul(ctx, n, d, d, false);
  return out;
}

Mat<float> ffn(const Mat<float>& tokens, const AttentionWeights& w, const ExecContext* ctx) {
  if (tokens.cols() != w.dim()) {
    throw_invalid("ffn input has " + std::to_string(tokens.cols()) + " channels, weights " +
                  std::to_string(w.dim()));
  }
  Mat<float> hidden = tokens * w.ffn_in;
  hidden.rowwise() += w.ffn_in_bias;
  hidden = hidden.unaryExpr([](float x) { return silu(x); });
  Mat<float> out = hidden * w.ffn_out;
  out.rowwise() += w.ffn_out_bias;
  count_matmul(ctx, tokens.rows(), w.dim(), w.ffn_dim(), false);
  count_matmul(ctx, tokens.rows(), w.ffn_dim(), w.dim(), false);
  return out;
}

Mat<float> transformer_sublayer(const Mat<float>& tokens, const AttentionWeights& w,
                                const ExecContext* ctx) {
  Mat<float> x = tokens + self_attention(layer_norm(tokens, w.norm_attn), w, ctx);
  x += ffn(layer_norm(x, w.norm_ffn), w, ctx);
  return x;
}

}  // namespace hiattn
