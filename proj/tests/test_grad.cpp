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

#include <cmath>

#include "hiattn/grad.hpp"
#include "hiattn/rng.hpp"
#include "hiattn/verify.hpp"

namespace hiattn::grad {
namespace {

Tensor rand_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0,
                   double offset = 0.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = offset + rng.symmetric(static_cast<float>(scale));
  return t;
}

// Contracts the composite output with a fixed random tensor so every output
// element contributes to the checked scalar.
Composite contracted(std::function<Var(Tape&, std::span<const Var>)> body,
                     std::vector<std::int64_t> out_shape, std::uint64_t seed) {
  Rng rng(seed ^ 0xABCDEFull);
  const Tensor c = rand_tensor(std::move(out_shape), rng);
  return [body, c](Tape& tp, std::span<const Var> in) { return tp.dot_const(body(tp, in), c); };
}

// --- forward recording -----------------------------------------------------

TEST(Record, SoftmaxMatchesUntaped) {
  Rng rng(1);
  const Tensor x = rand_tensor({3, 7}, rng, 4.0);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.softmax_rows(in[0]); }, {x});
  Mat<double> direct = x.matrix();
  softmax_rows<double>(direct);
  EXPECT_EQ(r.output.data, Tensor::from_matrix(direct).data);
}

TEST(Record, MatmulChainMatchesUntaped) {
  Rng rng(2);
  const Tensor a = rand_tensor({4, 5}, rng), b = rand_tensor({5, 3}, rng),
               c = rand_tensor({3, 6}, rng);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.matmul(tp.matmul(in[0], in[1]), in[2]); },
      {a, b, c});
  const Mat<double> direct = matmul<double>(matmul<double>(a.matrix(), b.matrix()), c.matrix());
  EXPECT_EQ(r.output.data, Tensor::from_matrix(direct).data);
}

TEST(Record, ConvAndResampleMatchUntaped) {
  Rng rng(3);
  const Tensor x = rand_tensor({1, 2, 4, 4, 2}, rng);
  const Tensor w = rand_tensor({27, 2, 2}, rng), b = rand_tensor({2}, rng);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) {
        return tp.conv3d(tp.bilinear(in[0], 6, 5), in[1], in[2]);
      },
      {x, w, b});
  Kernel3D<double> k = Kernel3D<double>::zeros(2);
  k.weights = w.data;
  k.bias = b.data;
  const auto direct = conv3d(bilinear_resample(x.latent(), 6, 5), k);
  EXPECT_EQ(r.output.data, std::vector<double>(direct.data().begin(), direct.data().end()));
}

TEST(Record, UnsupportedOp) {
  Tape tp;
  const Var x = tp.leaf(Tensor::scalar(1.0));
  const Var in[1] = {x};
  try {
    tp.call("fft", in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedOp);
  }
}

TEST(Record, GenericCallMatchesTyped) {
  Tape tp;
  Rng rng(4);
  const Var a = tp.leaf(rand_tensor({2, 3}, rng)), b = tp.leaf(rand_tensor({3, 2}, rng));
  const Var in[2] = {a, b};
  EXPECT_EQ(tp.value(tp.call("matmul", in)).data, tp.value(tp.matmul(a, b)).data);
  Attrs at;
  at.scale = 0.5;
  const Var one[1] = {a};
  EXPECT_EQ(tp.value(tp.call("scale", one, at)).data, tp.value(tp.scale(a, 0.5)).data);
  EXPECT_THROW(tp.call("matmul", one), Error);
}

TEST(Tape, TopologicalOrder) {
  const GradCase gc = attention_subblock_case(0);
  const Recording r = record_forward(gc.f, gc.point);
  for (std::size_t i = 0; i < r.tape.size(); ++i)
    for (int in : r.tape.inputs_of(i)) EXPECT_LT(static_cast<std::size_t>(in), i);
}

// --- backward ----------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  Rng rng(5);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.sum(in[0]); }, {rand_tensor({3, 4}, rng)});
  const auto g = r.tape.backward(r.result, Tensor::scalar(1.0));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].shape, (std::vector<std::int64_t>{3, 4}));
  for (double v : g[0].data) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SumOfLinearMap) {
  // d/dx sum(A x) = column sums of A, laid out as x's shape
  Rng rng(6);
  const Tensor a = rand_tensor({3, 4}, rng), x = rand_tensor({4, 2}, rng);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.sum(tp.matmul(in[0], in[1])); }, {a, x});
  const auto g = r.tape.backward(r.result, Tensor::scalar(1.0));
  const Mat<double> am = a.matrix();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(g[1].data[i * 2 + j], am.col(i).sum(), 1e-14);
}

TEST(Backward, CotangentShapeMismatch) {
  Rng rng(7);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.silu(in[0]); }, {rand_tensor({2, 2}, rng)});
  EXPECT_THROW(r.tape.backward(r.result, Tensor::zeros({4})), Error);
}

TEST(Backward, Linearity) {
  const GradCase gc = compress_attention_case(3);
  // drop the final contraction: take the pre-contraction output by
  // recording a composite that returns the conv3d output directly
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) {
        const Var small = tp.depthwise(in[0], in[1], in[2], 2, EdgeMode::kReplicate);
        return tp.conv3d(tp.bilinear(small, 4, 4), in[6], in[7]);
      },
      gc.point);
  Rng rng(8);
  const Tensor u = rand_tensor(r.output.shape, rng), v = rand_tensor(r.output.shape, rng);
  const double a = 0.7, b = -1.3;
  Tensor mix = u;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = a * u.data[i] + b * v.data[i];
  const auto gu = r.tape.backward(r.result, u);
  const auto gv = r.tape.backward(r.result, v);
  const auto gm = r.tape.backward(r.result, mix);
  for (std::size_t l = 0; l < gm.size(); ++l)
    for (std::size_t i = 0; i < gm[l].size(); ++i)
      EXPECT_NEAR(gm[l].data[i], a * gu[l].data[i] + b * gv[l].data[i], 1e-10);
}

TEST(Backward, UnusedLeafGetsZero) {
  Rng rng(9);
  const Recording r = record_forward(
      [](Tape& tp, std::span<const Var> in) { return tp.sum(in[0]); },
      {rand_tensor({2}, rng), rand_tensor({3}, rng)});
  const auto g = r.tape.backward(r.result, Tensor::scalar(2.0));
  for (double v : g[0].data) EXPECT_EQ(v, 2.0);
  for (double v : g[1].data) EXPECT_EQ(v, 0.0);
}

// --- finite differences ---------------------------------------------------

TEST(FiniteDiff, Quadratic) {
  Rng rng(10);
  const Composite f = [](Tape& tp, std::span<const Var> in) {
    return tp.sum(tp.mul(in[0], in[0]));
  };
  EXPECT_LE(finite_diff_check(f, {rand_tensor({5, 3}, rng, 2.0)}), 1e-8);
}

TEST(FiniteDiff, NonScalarRejected) {
  const Composite f = [](Tape& tp, std::span<const Var> in) { return tp.silu(in[0]); };
  EXPECT_THROW(finite_diff_check(f, {Tensor::zeros({2, 2})}), Error);
}

TEST(FiniteDiff, SoftmaxDot) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const GradCase gc = softmax_dot_case(s);
    EXPECT_LE(finite_diff_check(gc.f, gc.point), 1e-6) << "seed " << s;
  }
}

TEST(FiniteDiff, AttentionSubBlock) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const GradCase gc = attention_subblock_case(s);
    EXPECT_LE(finite_diff_check(gc.f, gc.point), 1e-5) << "seed " << s;
  }
}

TEST(FiniteDiff, CompressAttentionComposite) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const GradCase gc = compress_attention_case(s);
    EXPECT_LE(finite_diff_check(gc.f, gc.point), 1e-5) << "seed " << s;
  }
}

struct PrimitiveCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  std::function<Var(Tape&, std::span<const Var>)> body;
  std::vector<std::int64_t> out_shape;
};

class Primitive : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(Primitive, MatchesFiniteDifferencesAtTenPoints) {
  const PrimitiveCase& pc = GetParam();
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(100 + s);
    const Composite f = contracted(pc.body, pc.out_shape, s);
    EXPECT_LE(finite_diff_check(f, pc.inputs(rng)), 1e-5) << pc.name << " point " << s;
  }
}

using In = std::span<const Var>;

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, Primitive,
    ::testing::Values(
        PrimitiveCase{"matmul",
                      [](Rng& r) { return std::vector{rand_tensor({3, 4}, r), rand_tensor({4, 2}, r)}; },
                      [](Tape& t, In in) { return t.matmul(in[0], in[1]); },
                      {3, 2}},
        PrimitiveCase{"add",
                      [](Rng& r) { return std::vector{rand_tensor({2, 3}, r), rand_tensor({2, 3}, r)}; },
                      [](Tape& t, In in) { return t.add(in[0], in[1]); },
                      {2, 3}},
        PrimitiveCase{"mul",
                      [](Rng& r) { return std::vector{rand_tensor({2, 3}, r), rand_tensor({2, 3}, r)}; },
                      [](Tape& t, In in) { return t.mul(in[0], in[1]); },
                      {2, 3}},
        PrimitiveCase{"scale", [](Rng& r) { return std::vector{rand_tensor({4}, r)}; },
                      [](Tape& t, In in) { return t.scale(in[0], -2.5); },
                      {4}},
        PrimitiveCase{"add_row",
                      [](Rng& r) { return std::vector{rand_tensor({3, 4}, r), rand_tensor({1, 4}, r)}; },
                      [](Tape& t, In in) { return t.add_row(in[0], in[1]); },
                      {3, 4}},
        PrimitiveCase{"silu", [](Rng& r) { return std::vector{rand_tensor({3, 3}, r, 3.0)}; },
                      [](Tape& t, In in) { return t.silu(in[0]); },
                      {3, 3}},
        PrimitiveCase{"softmax_rows",
                      [](Rng& r) { return std::vector{rand_tensor({3, 5}, r, 3.0)}; },
                      [](Tape& t, In in) { return t.softmax_rows(in[0]); },
                      {3, 5}},
        PrimitiveCase{"layer_norm",
                      [](Rng& r) {
                        return std::vector{rand_tensor({3, 4}, r), rand_tensor({1, 4}, r, 0.5, 1.0),
                                           rand_tensor({1, 4}, r, 0.5)};
                      },
                      [](Tape& t, In in) { return t.layer_norm(in[0], in[1], in[2]); },
                      {3, 4}},
        PrimitiveCase{"attn_scores",
                      [](Rng& r) { return std::vector{rand_tensor({3, 4}, r), rand_tensor({5, 4}, r)}; },
                      [](Tape& t, In in) { return t.attn_scores(in[0], in[1], 0.5); },
                      {3, 5}},
        PrimitiveCase{"attn_apply",
                      [](Rng& r) { return std::vector{rand_tensor({3, 5}, r), rand_tensor({5, 2}, r)}; },
                      [](Tape& t, In in) { return t.attn_apply(in[0], in[1]); },
                      {3, 2}},
        PrimitiveCase{"depthwise_strict",
                      [](Rng& r) {
                        return std::vector{rand_tensor({1, 2, 4, 6, 2}, r), rand_tensor({2, 2, 2}, r),
                                           rand_tensor({2}, r)};
                      },
                      [](Tape& t, In in) {
                        return t.depthwise(in[0], in[1], in[2], 2, EdgeMode::kStrict);
                      },
                      {1, 2, 2, 3, 2}},
        PrimitiveCase{"depthwise_replicate",
                      [](Rng& r) {
                        return std::vector{rand_tensor({1, 1, 5, 3, 2}, r), rand_tensor({2, 2, 2}, r),
                                           rand_tensor({2}, r)};
                      },
                      [](Tape& t, In in) {
                        return t.depthwise(in[0], in[1], in[2], 2, EdgeMode::kReplicate);
                      },
                      {1, 1, 3, 2, 2}},
        PrimitiveCase{"conv3d",
                      [](Rng& r) {
                        return std::vector{rand_tensor({1, 3, 3, 4, 2}, r), rand_tensor({27, 2, 2}, r),
                                           rand_tensor({2}, r)};
                      },
                      [](Tape& t, In in) { return t.conv3d(in[0], in[1], in[2]); },
                      {1, 3, 3, 4, 2}},
        PrimitiveCase{"bilinear_up",
                      [](Rng& r) { return std::vector{rand_tensor({1, 2, 3, 2, 2}, r)}; },
                      [](Tape& t, In in) { return t.bilinear(in[0], 7, 5); },
                      {1, 2, 7, 5, 2}},
        PrimitiveCase{"bilinear_down",
                      [](Rng& r) { return std::vector{rand_tensor({1, 1, 9, 8, 1}, r)}; },
                      [](Tape& t, In in) { return t.bilinear(in[0], 4, 3); },
                      {1, 1, 4, 3, 1}},
        PrimitiveCase{"reshape", [](Rng& r) { return std::vector{rand_tensor({2, 6}, r)}; },
                      [](Tape& t, In in) { return t.silu(t.reshape(in[0], {3, 4})); },
                      {3, 4}},
        PrimitiveCase{"sum", [](Rng& r) { return std::vector{rand_tensor({2, 3}, r)}; },
                      [](Tape& t, In in) { return t.sum(t.mul(in[0], in[0])); },
                      {1}}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace hiattn::grad
