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

#include "hiattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "hiattn/block.hpp"
#include "hiattn/rng.hpp"

namespace hiattn {
namespace {

using grad::Tape;
using grad::Tensor;
using grad::Var;

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.symmetric(static_cast<float>(scale));
  return t;
}

struct AttnVars {
  Var wq, wk, wv;
};

// Single-head attention on token rows x, without output projection.
Var attend(Tape& tp, Var x, const AttnVars& w, std::int64_t dim) {
  const Var q = tp.matmul(x, w.wq);
  const Var k = tp.matmul(x, w.wk);
  const Var v = tp.matmul(x, w.wv);
  const Var p = tp.softmax_rows(tp.attn_scores(q, k, 1.0 / std::sqrt(static_cast<double>(dim))));
  return tp.attn_apply(p, v);
}

}  // namespace

GradCase softmax_dot_case(std::uint64_t seed, std::int64_t n) {
  Rng rng(seed);
  Tensor c = random_tensor({1, n}, rng, 1.0);
  GradCase gc;
  gc.name = "softmax+dot";
  gc.point = {random_tensor({1, n}, rng, 2.0)};
  gc.f = [c](Tape& tp, std::span<const Var> in) {
    return tp.dot_const(tp.softmax_rows(in[0]), c);
  };
  return gc;
}

GradCase attention_subblock_case(std::uint64_t seed, std::int64_t tokens, std::int64_t dim) {
  Rng rng(seed);
  const std::int64_t ff = 2 * dim;
  const double ws = 1.0 / std::sqrt(static_cast<double>(dim));
  GradCase gc;
  gc.name = "attention sub-block";
  gc.point = {
      random_tensor({tokens, dim}, rng, 1.0),  // x
      random_tensor({dim, dim}, rng, ws),      // w_q
      random_tensor({dim, dim}, rng, ws),      // w_k
      random_tensor({dim, dim}, rng, ws),      // w_v
      random_tensor({dim, dim}, rng, ws),      // w_o
      random_tensor({dim, ff}, rng, ws),       // ffn_in
      random_tensor({1, ff}, rng, 0.1),        // ffn_in bias
      random_tensor({ff, dim}, rng, 1.0 / std::sqrt(static_cast<double>(ff))),
      random_tensor({1, dim}, rng, 0.1),  // ffn_out bias
  };
  Tensor g1 = random_tensor({1, dim}, rng, 0.2), g2 = random_tensor({1, dim}, rng, 0.2);
  for (double& v : g1.data) v += 1.0;
  for (double& v : g2.data) v += 1.0;
  gc.point.push_back(g1);
  gc.point.push_back(random_tensor({1, dim}, rng, 0.1));
  gc.point.push_back(g2);
  gc.point.push_back(random_tensor({1, dim}, rng, 0.1));
  const Tensor c = random_tensor({tokens, dim}, rng, 1.0);
  gc.f = [c, dim](Tape& tp, std::span<const Var> in) {
    const Var x = in[0];
    const Var h = tp.layer_norm(x, in[9], in[10]);
    const Var a = tp.matmul(attend(tp, h, {in[1], in[2], in[3]}, dim), in[4]);
    const Var x1 = tp.add(x, a);
    const Var h2 = tp.layer_norm(x1, in[11], in[12]);
    const Var f = tp.silu(tp.add_row(tp.matmul(h2, in[5]), in[6]));
    const Var y = tp.add(x1, tp.add_row(tp.matmul(f, in[7]), in[8]));
    return tp.dot_const(y, c);
  };
  return gc;
}

GradCase compress_attention_case(std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::int64_t T = 2, H = 4, W = 4, D = 2;
  GradCase gc;
  gc.name = "compress-attn-bilinear-conv3d";
  Tensor kern = random_tensor({D, 2, 2}, rng, 0.1);
  for (double& v : kern.data) v += 0.25;
  gc.point = {
      random_tensor({1, T, H, W, D}, rng, 1.0),
      kern,
      random_tensor({D}, rng, 0.1),
      random_tensor({D, D}, rng, 0.7),
      random_tensor({D, D}, rng, 0.7),
      random_tensor({D, D}, rng, 0.7),
      random_tensor({27, D, D}, rng, 0.3),
      random_tensor({D}, rng, 0.1),
  };
  const Tensor c = random_tensor({1, T, H, W, D}, rng, 1.0);
  gc.f = [c](Tape& tp, std::span<const Var> in) {
    const Var small = tp.depthwise(in[0], in[1], in[2], 2, EdgeMode::kReplicate);
    const Var rows = tp.reshape(small, {T * (H / 2) * (W / 2), D});
    const Var att = attend(tp, rows, {in[3], in[4], in[5]}, D);
    const Var back = tp.bilinear(tp.reshape(att, {1, T, H / 2, W / 2, D}), H, W);
    return tp.dot_const(tp.conv3d(back, in[6], in[7]), c);
  };
  return gc;
}

BasicLatent<double> average_pool_oracle(const BasicLatent<double>& z, int k) {
  const Dims& d = z.dims();
  Dims od = d;
  od.height = d.height / k;
  od.width = d.width / k;
  BasicLatent<double> out(od);
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t i = 0; i < od.height; ++i)
        for (std::int64_t j = 0; j < od.width; ++j)
          for (std::int64_t c = 0; c < d.channels; ++c) {
            double s = 0.0;
            for (int a = 0; a < k; ++a)
              for (int e = 0; e < k; ++e) s += z.at(b, t, i * k + a, j * k + e, c);
            out.at(b, t, i, j, c) = s / (k * k);
          }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

CheckResult check_partition_roundtrip(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    const auto pick = [&](std::int64_t lo, std::int64_t hi) {
      return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen);
    };
    const Dims d{1, pick(1, 3), pick(1, 24), pick(1, 24), pick(1, 4)};
    const int parts = static_cast<int>(pick(1, std::min(d.height, d.width)));
    const VideoLatent z = random_latent(d, gen());
    const PartitionSpec spec = make_partition(d.height, d.width, parts);
    const auto windows = partition(z, spec);
    if (!(aggregate<float>(windows, spec) == z)) ++bad;
  }
  return {"partition round trip", bad == 0, static_cast<double>(bad), 0.0, "100 random cases"};
}

CheckResult check_boundary_disjoint() {
  int bad = 0;
  for (std::int64_t h : {20, 40, 60})
    for (int k : {2, 3, 4}) {
      const auto a = make_partition(h, h, k).row_bounds;
      const auto b = make_partition(h, h, k + 1).row_bounds;
      const std::set<std::int64_t> ia(a.begin() + 1, a.end() - 1);
      for (auto it = b.begin() + 1; it != b.end() - 1; ++it) bad += ia.count(*it) ? 1 : 0;
    }
  return {"boundary disjointness", bad == 0, static_cast<double>(bad), 0.0,
          "H in {20,40,60}, K in {2,3,4}"};
}

CheckResult check_pooling_init(std::uint64_t seed, bool fault) {
  constexpr double kTol = 1e-6;
  double worst = 0.0;
  for (int f = 0; f < 50; ++f) {
    const int k = 1 << (f % 3);  // 1, 2, 4
    const Dims d{1, 1, 16, 16, 3};
    const VideoLatent z = random_latent(d, seed + static_cast<std::uint64_t>(f));
    auto kern = DepthwiseKernel2D<float>::averaging(d.channels, k);
    if (fault && f == 0) kern.weights[0] = -kern.weights[0];
    const VideoLatent got = depthwise_compress(z, kern);
    const auto want = average_pool_oracle(z.cast<double>(), k);
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(double{got.data()[i]} - want.data()[i]));
  }
  return {"pooling init", worst <= kTol, worst, kTol, "50 frames, k in {1,2,4}"};
}

CheckResult check_gate_neutral(std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t channels = 8;
  const FusionGate zero = FusionGate::create(channels, 32, rng, 0.0f);
  const FusionGate live = FusionGate::create(channels, 32, rng, 1.0f);
  const Dims d{1, 2, 4, 4, channels};
  const VideoLatent a = random_latent(d, seed + 1), b = random_latent(d, seed + 2);
  int bad = 0;
  for (double t : {0.0, 500.0, 999.0}) {
    const VideoLatent z = fuse(a, b, t, zero);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const float want =
          static_cast<float>((double{a.data()[i]} + double{b.data()[i]}) / 2.0);
      if (z.data()[i] != want) ++bad;
    }
    for (double al : live.alpha(t))
      if (!(al > 0.0 && al < 1.0)) ++bad;
  }
  return {"gate neutrality", bad == 0, static_cast<double>(bad), 0.0,
          "zero final layer gives (a+b)/2; alpha in (0,1)"};
}

CheckResult check_grad(const GradCase& gc) {
  constexpr double kTol = 1e-5;
  const double err = grad::finite_diff_check(gc.f, gc.point);
  return {"gradient " + gc.name, err <= kTol, err, kTol, "central differences, double"};
}

}  // namespace

std::vector<CheckResult> run_verify_suite(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  const auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, 0.0, 0.0, e.what()});
    }
  };
  guarded("partition round trip", [&] { return check_partition_roundtrip(opts.seed); });
  guarded("boundary disjointness", [&] { return check_boundary_disjoint(); });
  guarded("pooling init", [&] { return check_pooling_init(opts.seed, opts.inject_fault); });
  guarded("gate neutrality", [&] { return check_gate_neutral(opts.seed); });
  guarded("gradient softmax+dot", [&] { return check_grad(softmax_dot_case(opts.seed)); });
  guarded("gradient attention sub-block",
          [&] { return check_grad(attention_subblock_case(opts.seed)); });
  guarded("gradient compress-attn-bilinear-conv3d",
          [&] { return check_grad(compress_attention_case(opts.seed)); });
  return out;
}

}  // namespace hiattn
