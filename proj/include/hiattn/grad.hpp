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
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "hiattn/nn_ops.hpp"

namespace hiattn::grad {

/// Dense double-precision value with a row-major shape. Matrices are rank 2,
/// latents rank 5 (B, T, H, W, D).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> d);
  static Tensor zeros(std::vector<std::int64_t> s);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from_matrix(const Mat<double>& m);
  static Tensor from_latent(const BasicLatent<double>& z);

  std::size_t size() const { return data.size(); }
  Mat<double> matrix() const;
  BasicLatent<double> latent() const;
};

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

/// Non-tensor operands of a primitive.
struct Attrs {
  double scale = 1.0;
  int k = 1;
  EdgeMode edge = EdgeMode::kStrict;
  int kt = 3, kh = 3, kw = 3;
  std::int64_t h_out = 0, w_out = 0;
  std::vector<std::int64_t> shape;
  Tensor constant;
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kAddRow,
  kSilu,
  kSoftmaxRows,
  kLayerNorm,
  kAttnScores,
  kAttnApply,
  kDepthwise,
  kConv3d,
  kBilinear,
  kReshape,
  kSum,
  kDotConst,
};

/// Records primitive applications in execution order. Every input of a node
/// was recorded before it, so reverse order is a valid backward schedule.
///
/// Forward values come from the same nn-ops routines the untaped code uses
/// (instantiated for double), so recording never changes results.
class Tape {
 public:
  Var leaf(Tensor value);

  /// Generic entry point by primitive name ("matmul", "softmax_rows", ...).
  /// Unknown names throw ErrorKind::kUnsupportedOp.
  Var call(std::string_view op, std::span<const Var> inputs, const Attrs& attrs = {});

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  /// x (N x C) plus a length-C row broadcast over rows.
  Var add_row(Var x, Var row);
  Var silu(Var x);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias);
  /// scale * q k^T
  Var attn_scores(Var q, Var k, double scale);
  /// p v
  Var attn_apply(Var p, Var v);
  Var depthwise(Var x, Var weights, Var bias, int k, EdgeMode edge);
  Var conv3d(Var x, Var weights, Var bias, int kt = 3, int kh = 3, int kw = 3);
  Var bilinear(Var x, std::int64_t h_out, std::int64_t w_out);
  Var reshape(Var x, std::vector<std::int64_t> shape);
  Var sum(Var x);
  /// sum(x * c) for a fixed tensor c of x's size.
  Var dot_const(Var x, Tensor c);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::size_t leaf_count() const;
  Op op_of(std::size_t node) const { return nodes_.at(node).op; }
  const std::vector<int>& inputs_of(std::size_t node) const { return nodes_.at(node).inputs; }

  /// Gradients of <output, cotangent> for every leaf, in leaf creation order.
  std::vector<Tensor> backward(Var output, const Tensor& cotangent) const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> inputs;
    Attrs attrs;
    Tensor value;
  };

  Var push(Op op, std::vector<int> inputs, Attrs attrs, Tensor value);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

/// A composite forward: builds its output from the given leaf handles.
using Composite = std::function<Var(Tape&, std::span<const Var>)>;

struct Recording {
  Tensor output;
  Var result;
  Tape tape;
};

/// Records f on a fresh tape with one leaf per input.
Recording record_forward(const Composite& f, std::vector<Tensor> inputs);

/// Max over every input coordinate of |g_ad - g_fd| / max(1, |g_fd|), with
/// central differences at step max(eps * |x|, 1e-6). f must be scalar.
double finite_diff_check(const Composite& f, const std::vector<Tensor>& point,
                         double eps = 1e-5);

}  // namespace hiattn::grad
