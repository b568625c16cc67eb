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

#include <gtest/gtest.h>

#include <numeric>

#include "hiattn/attention.hpp"
#include "hiattn/rng.hpp"

namespace hiattn {
namespace {

Mat<float> random_tokens(std::int64_t n, std::int64_t d, std::uint64_t seed) {
  Rng rng(seed);
  Mat<float> m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.symmetric(1.0f);
  return m;
}

TEST(Lora, ZeroResidualIsBitwiseIdentity) {
  Rng rng(1);
  const AttentionWeights w = AttentionWeights::random(16, 32, 1, rng);
  const LoRAAdapter a = LoRAAdapter::create(16, 32, 4, rng);
  const AttentionWeights out = apply_lora(w, a);
  EXPECT_EQ(out.w_q, w.w_q);
  EXPECT_EQ(out.w_k, w.w_k);
  EXPECT_EQ(out.w_v, w.w_v);
  EXPECT_EQ(out.w_o, w.w_o);
  EXPECT_EQ(out.ffn_in, w.ffn_in);
  EXPECT_EQ(out.ffn_out, w.ffn_out);
}

TEST(Lora, TwoByTwoProduct) {
  const Mat<float> eye = Mat<float>::Identity(2, 2);
  LoRAFactors f;
  f.a = Mat<float>{{1.0f}, {0.0f}};
  f.b = Mat<float>{{0.0f, 2.0f}};
  EXPECT_EQ(lora_merge(eye, f), (Mat<float>{{1.0f, 2.0f}, {0.0f, 1.0f}}));
}

TEST(Lora, RankBoundAtConstruction) {
  Rng rng(2);
  EXPECT_NO_THROW(LoRAAdapter::create(16, 32, 4, rng));
  EXPECT_THROW(LoRAAdapter::create(16, 32, 5, rng), Error);
  EXPECT_THROW(LoRAAdapter::create(16, 32, 0, rng), Error);
}

TEST(Lora, AdaptsAllButOutputProjection) {
  Rng rng(3);
  const AttentionWeights w = AttentionWeights::random(8, 16, 1, rng);
  LoRAAdapter a = LoRAAdapter::create(8, 16, 2, rng);
  for (LoRAFactors* f : {&a.q, &a.k, &a.v, &a.ffn_in, &a.ffn_out}) f->b.setConstant(0.5f);
  const AttentionWeights out = apply_lora(w, a);
  EXPECT_NE(out.w_q, w.w_q);
  EXPECT_NE(out.w_k, w.w_k);
  EXPECT_NE(out.w_v, w.w_v);
  EXPECT_NE(out.ffn_in, w.ffn_in);
  EXPECT_NE(out.ffn_out, w.ffn_out);
  EXPECT_EQ(out.w_o, w.w_o);
  EXPECT_EQ(out.w_q, lora_merge(w.w_q, a.q));
}

TEST(Lora, ShapeMismatch) {
  Rng rng(4);
  const AttentionWeights w = AttentionWeights::random(8, 16, 1, rng);
  const LoRAAdapter a = LoRAAdapter::create(16, 32, 2, rng);
  EXPECT_THROW(apply_lora(w, a), Error);
}

TEST(SelfAttention, SingleTokenIdentity) {
  const AttentionWeights w = AttentionWeights::identity(4, 8);
  const Mat<float> x = random_tokens(1, 4, 5);
  EXPECT_EQ(self_attention(x, w), x);
}

TEST(SelfAttention, IdenticalTokens) {
  Rng rng(6);
  const AttentionWeights w = AttentionWeights::random(8, 16, 2, rng);
  Mat<float> x(5, 8);
  x.rowwise() = random_tokens(1, 8, 7).row(0);
  const Mat<float> y = self_attention(x, w);
  for (Eigen::Index i = 1; i < 5; ++i)
    for (Eigen::Index c = 0; c < 8; ++c) EXPECT_NEAR(y(i, c), y(0, c), 1e-6);
}

TEST(SelfAttention, ZeroQueryGivesColumnMean) {
  Rng rng(8);
  AttentionWeights w = AttentionWeights::random(6, 12, 1, rng);
  w.w_q.setZero();
  const Mat<float> x = random_tokens(7, 6, 9);
  const Mat<float> y = self_attention(x, w);
  const Mat<double> vo = (x * w.w_v * w.w_o).cast<double>();
  const RowVec<double> mean = vo.colwise().mean();
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index c = 0; c < 6; ++c) EXPECT_NEAR(y(i, c), mean(c), 1e-6);
}

TEST(SelfAttention, PermutationEquivariant) {
  Rng rng(10);
  const AttentionWeights w = AttentionWeights::random(8, 16, 2, rng);
  const Mat<float> x = random_tokens(9, 8, 11);
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[4]);
  Mat<float> xp(9, 8);
  for (int i = 0; i < 9; ++i) xp.row(i) = x.row(perm[i]);
  const Mat<float> y = self_attention(x, w), yp = self_attention(xp, w);
  for (int i = 0; i < 9; ++i)
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(yp(i, c), y(perm[i], c), 1e-6);
}

TEST(SelfAttention, ConvexCombinationOfValues) {
  // with W_O = I each output row is sum_j p_ij v_j with p a probability row
  Rng rng(12);
  AttentionWeights w = AttentionWeights::random(4, 8, 1, rng);
  w.w_o.setIdentity();
  const Mat<float> x = random_tokens(6, 4, 13);
  const Mat<float> y = self_attention(x, w);
  const Mat<double> q = (x * w.w_q).cast<double>(), k = (x * w.w_k).cast<double>(),
                    v = (x * w.w_v).cast<double>();
  for (Eigen::Index i = 0; i < 6; ++i) {
    Eigen::RowVectorXd s = (q.row(i) * k.transpose()) / 2.0;
    s = (s.array() - s.maxCoeff()).exp().matrix();
    s /= s.sum();
    for (Eigen::Index j = 0; j < 6; ++j) ASSERT_GE(s(j), 0.0);
    const Eigen::RowVectorXd rebuilt = s * v;
    for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(y(i, c), rebuilt(c), 1e-5);
  }
}

TEST(SelfAttention, MultiHeadSplitsChannels) {
  // two heads with block-diagonal identity projections attend independently
  const AttentionWeights w = AttentionWeights::identity(4, 8, 2);
  Mat<float> x(2, 4);
  x << 1, 0, 0, 0,
       0, 0, 1, 0;
  const Mat<float> y = self_attention(x, w);
  EXPECT_TRUE(y.allFinite());
  EXPECT_THROW(AttentionWeights::identity(4, 8, 3), Error);
}

TEST(SelfAttention, RejectsBadTokens) {
  const AttentionWeights w = AttentionWeights::identity(4, 8);
  EXPECT_THROW(self_attention(Mat<float>(0, 4), w), Error);
  EXPECT_THROW(self_attention(Mat<float>::Zero(2, 3), w), Error);
}

TEST(Ffn, ZeroWeights) {
  const AttentionWeights w = AttentionWeights::identity(4, 8);
  const Mat<float> y = ffn(random_tokens(3, 4, 14), w);
  EXPECT_TRUE(y.isZero(0.0f));
}

TEST(Ffn, LinearRegimeInverse) {
  // silu(x) ~ x/2 near 0: w1 = s*I, w2 = (2/s)*I reproduces x to O(s)
  AttentionWeights w = AttentionWeights::identity(3, 3);
  const float s = 1e-3f;
  w.ffn_in = Mat<float>::Identity(3, 3) * s;
  w.ffn_out = Mat<float>::Identity(3, 3) * (2.0f / s);
  const Mat<float> x = random_tokens(4, 3, 15);
  const Mat<float> y = ffn(x, w);
  for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 2e-3);
}

TEST(Ffn, RowwiseMap) {
  Rng rng(16);
  const AttentionWeights w = AttentionWeights::random(4, 8, 1, rng);
  const Mat<float> x = random_tokens(5, 4, 17);
  const Mat<float> y = ffn(x, w);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(ffn(Mat<float>(x.row(i)), w).row(0), y.row(i));
}

TEST(Ffn, ShapeMismatch) {
  const AttentionWeights w = AttentionWeights::identity(4, 8);
  EXPECT_THROW(ffn(Mat<float>::Zero(2, 5), w), Error);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  const Mat<float> y = layer_norm(random_tokens(4, 16, 18), LayerNormParams::identity(16));
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0f, 1e-6);
    EXPECT_NEAR(y.row(i).squaredNorm() / 16.0f, 1.0f, 1e-3);
  }
}

}  // namespace
}  // namespace hiattn
