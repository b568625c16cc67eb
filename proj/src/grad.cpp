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

#include "hiattn/grad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "hiattn/attention.hpp"
#include "hiattn/errors.hpp"

namespace hiattn::grad {
namespace {

std::int64_t product(const std::vector<std::int64_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.shape.size() != rank) {
    throw_invalid(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                  shape_str(t.shape));
  }
}

void expect_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape) {
    throw_invalid(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                  shape_str(b.shape));
  }
}

Dims dims_of(const Tensor& t) {
  expect_rank(t, 5, "latent");
  return Dims{t.shape[0], t.shape[1], t.shape[2], t.shape[3], t.shape[4]};
}

DepthwiseKernel2D<double> depthwise_kernel(const Tensor& w, const Tensor& b, int k,
                                           std::int64_t channels) {
  if (w.shape != std::vector<std::int64_t>{channels, k, k} ||
      b.size() != static_cast<std::size_t>(channels)) {
    throw_invalid("depthwise weights must be [C,k,k] with a length-C bias, got " +
                  shape_str(w.shape));
  }
  DepthwiseKernel2D<double> kern;
  kern.k = k;
  kern.channels = channels;
  kern.weights = w.data;
  kern.bias = b.data;
  return kern;
}

Kernel3D<double> conv_kernel(const Tensor& w, const Tensor& b, const Attrs& a,
                             std::int64_t channels) {
  Kernel3D<double> kern;
  kern.kt = a.kt;
  kern.kh = a.kh;
  kern.kw = a.kw;
  kern.channels = channels;
  if (w.shape != std::vector<std::int64_t>{kern.taps(), channels, channels}) {
    throw_invalid("conv3d weights must be [taps,C,C], got " + shape_str(w.shape));
  }
  kern.weights = w.data;
  kern.bias = b.data;
  kern.validate();
  return kern;
}

struct LnStats {
  std::vector<double> mean, inv;
};

LnStats ln_stats(const Mat<double>& x) {
  const Eigen::Index d = x.cols();
  LnStats s;
  s.mean.resize(static_cast<std::size_t>(x.rows()));
  s.inv.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r).array();
    const double mean = row.sum() / static_cast<double>(d);
    const double var = (row - mean).square().sum() / static_cast<double>(d);
    s.mean[static_cast<std::size_t>(r)] = mean;
    s.inv[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(var + double{kLayerNormEps});
  }
  return s;
}

const std::unordered_map<std::string_view, Op>& op_table() {
  static const std::unordered_map<std::string_view, Op> table = {
      {"matmul", Op::kMatmul},
      {"add", Op::kAdd},
      {"mul", Op::kMul},
      {"scale", Op::kScale},
      {"add_row", Op::kAddRow},
      {"silu", Op::kSilu},
      {"softmax_rows", Op::kSoftmaxRows},
      {"layer_norm", Op::kLayerNorm},
      {"attn_scores", Op::kAttnScores},
      {"attn_apply", Op::kAttnApply},
      {"depthwise", Op::kDepthwise},
      {"conv3d", Op::kConv3d},
      {"bilinear", Op::kBilinear},
      {"reshape", Op::kReshape},
      {"sum", Op::kSum},
      {"dot_const", Op::kDotConst},
  };
  return table;
}

std::size_t arity(Op op) {
  switch (op) {
    case Op::kLeaf: return 0;
    case Op::kScale:
    case Op::kSilu:
    case Op::kSoftmaxRows:
    case Op::kBilinear:
    case Op::kReshape:
    case Op::kSum:
    case Op::kDotConst: return 1;
    case Op::kLayerNorm:
    case Op::kDepthwise:
    case Op::kConv3d: return 3;
    default: return 2;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  for (auto e : shape) {
    if (e < 1) throw_invalid("tensor extents must be >= 1, got " + shape_str(shape));
  }
  if (static_cast<std::size_t>(product(shape)) != data.size()) {
    throw_invalid("tensor shape " + shape_str(shape) + " does not match " +
                  std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(std::vector<std::int64_t> s) {
  const auto n = static_cast<std::size_t>(product(s));
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::from_matrix(const Mat<double>& m) {
  return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data(), m.data() + m.size()));
}

Tensor Tensor::from_latent(const BasicLatent<double>& z) {
  const Dims& d = z.dims();
  return Tensor({d.batch, d.frames, d.height, d.width, d.channels},
                std::vector<double>(z.data().begin(), z.data().end()));
}

Mat<double> Tensor::matrix() const {
  expect_rank(*this, 2, "matrix");
  return Eigen::Map<const Mat<double>>(data.data(), shape[0], shape[1]);
}

BasicLatent<double> Tensor::latent() const { return BasicLatent<double>(dims_of(*this), data); }

// ---------------------------------------------------------------------------

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw_invalid("variable " + std::to_string(v.id) + " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

std::size_t Tape::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.op == Op::kLeaf; }));
}

Var Tape::push(Op op, std::vector<int> inputs, Attrs attrs, Tensor value) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(attrs), std::move(value)});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(Op::kLeaf, {}, {}, std::move(value)); }

Var Tape::call(std::string_view op, std::span<const Var> in, const Attrs& a) {
  const auto& table = op_table();
  const auto it = table.find(op);
  if (it == table.end()) {
    throw Error(ErrorKind::kUnsupportedOp, "unsupported primitive '" + std::string(op) + "'");
  }
  if (in.size() != arity(it->second)) {
    throw_invalid(std::string(op) + " takes " + std::to_string(arity(it->second)) +
                  " inputs, got " + std::to_string(in.size()));
  }
  switch (it->second) {
    case Op::kMatmul: return matmul(in[0], in[1]);
    case Op::kAdd: return add(in[0], in[1]);
    case Op::kMul: return mul(in[0], in[1]);
    case Op::kScale: return scale(in[0], a.scale);
    case Op::kAddRow: return add_row(in[0], in[1]);
    case Op::kSilu: return silu(in[0]);
    case Op::kSoftmaxRows: return softmax_rows(in[0]);
    case Op::kLayerNorm: return layer_norm(in[0], in[1], in[2]);
    case Op::kAttnScores: return attn_scores(in[0], in[1], a.scale);
    case Op::kAttnApply: return attn_apply(in[0], in[1]);
    case Op::kDepthwise: return depthwise(in[0], in[1], in[2], a.k, a.edge);
    case Op::kConv3d: return conv3d(in[0], in[1], in[2], a.kt, a.kh, a.kw);
    case Op::kBilinear: return bilinear(in[0], a.h_out, a.w_out);
    case Op::kReshape: return reshape(in[0], a.shape);
    case Op::kSum: return sum(in[0]);
    case Op::kDotConst: return dot_const(in[0], a.constant);
    case Op::kLeaf: break;
  }
  throw Error(ErrorKind::kUnsupportedOp, "unsupported primitive '" + std::string(op) + "'");
}

Var Tape::matmul(Var a, Var b) {
  const Mat<double> am = value(a).matrix(), bm = value(b).matrix();
  if (am.cols() != bm.rows()) {
    throw_invalid("matmul: inner dimensions differ, " + shape_str(value(a).shape) + " x " +
                  shape_str(value(b).shape));
  }
  return push(Op::kMatmul, {a.id, b.id}, {}, Tensor::from_matrix(hiattn::matmul(am, bm)));
}

Var Tape::add(Var a, Var b) {
  const Tensor &x = value(a), &y = value(b);
  expect_same(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
  return push(Op::kAdd, {a.id, b.id}, {}, std::move(out));
}

Var Tape::mul(Var a, Var b) {
  const Tensor &x = value(a), &y = value(b);
  expect_same(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= y.data[i];
  return push(Op::kMul, {a.id, b.id}, {}, std::move(out));
}

Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (double& v : out.data) v *= s;
  Attrs at;
  at.scale = s;
  return push(Op::kScale, {a.id}, std::move(at), std::move(out));
}

Var Tape::add_row(Var x, Var row) {
  Mat<double> m = value(x).matrix();
  const Tensor& r = value(row);
  if (r.size() != static_cast<std::size_t>(m.cols())) {
    throw_invalid("add_row: row has " + std::to_string(r.size()) + " values, matrix has " +
                  std::to_string(m.cols()) + " columns");
  }
  m.rowwise() += Eigen::Map<const RowVec<double>>(r.data.data(), m.cols());
  return push(Op::kAddRow, {x.id, row.id}, {}, Tensor::from_matrix(m));
}

Var Tape::silu(Var x) {
  Tensor out = value(x);
  for (double& v : out.data) v = hiattn::silu(v);
  return push(Op::kSilu, {x.id}, {}, std::move(out));
}

Var Tape::softmax_rows(Var x) {
  Mat<double> m = value(x).matrix();
  hiattn::softmax_rows<double>(m);
  return push(Op::kSoftmaxRows, {x.id}, {}, Tensor::from_matrix(m));
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
  const Mat<double> m = value(x).matrix();
  const Tensor &g = value(gain), &b = value(bias);
  if (g.size() != static_cast<std::size_t>(m.cols()) ||
      b.size() != static_cast<std::size_t>(m.cols())) {
    throw_invalid("layer_norm: gain and bias need " + std::to_string(m.cols()) + " values");
  }
  const LnStats s = ln_stats(m);
  Mat<double> y(m.rows(), m.cols());
  const Eigen::Map<const RowVec<double>> ga(g.data.data(), m.cols()), ba(b.data.data(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    y.row(r) = ((m.row(r).array() - s.mean[i]) * s.inv[i] * ga.array() + ba.array()).matrix();
  }
  return push(Op::kLayerNorm, {x.id, gain.id, bias.id}, {}, Tensor::from_matrix(y));
}

Var Tape::attn_scores(Var q, Var k, double s) {
  const Mat<double> qm = value(q).matrix(), km = value(k).matrix();
  if (qm.cols() != km.cols()) throw_invalid("attn_scores: q and k widths differ");
  Mat<double> sc = hiattn::matmul<double>(qm, km.transpose());
  sc *= s;
  Attrs at;
  at.scale = s;
  return push(Op::kAttnScores, {q.id, k.id}, std::move(at), Tensor::from_matrix(sc));
}

Var Tape::attn_apply(Var p, Var v) {
  const Mat<double> pm = value(p).matrix(), vm = value(v).matrix();
  if (pm.cols() != vm.rows()) throw_invalid("attn_apply: p columns must equal v rows");
  return push(Op::kAttnApply, {p.id, v.id}, {}, Tensor::from_matrix(hiattn::matmul(pm, vm)));
}

Var Tape::depthwise(Var x, Var weights, Var bias, int k, EdgeMode edge) {
  if (k < 1) throw_invalid("depthwise: k must be >= 1");
  const BasicLatent<double> z = value(x).latent();
  const auto kern = depthwise_kernel(value(weights), value(bias), k, z.dims().channels);
  Attrs at;
  at.k = k;
  at.edge = edge;
  return push(Op::kDepthwise, {x.id, weights.id, bias.id}, std::move(at),
              Tensor::from_latent(depthwise_compress(z, kern, edge)));
}

Var Tape::conv3d(Var x, Var weights, Var bias, int kt, int kh, int kw) {
  const BasicLatent<double> z = value(x).latent();
  Attrs at;
  at.kt = kt;
  at.kh = kh;
  at.kw = kw;
  const auto kern = conv_kernel(value(weights), value(bias), at, z.dims().channels);
  return push(Op::kConv3d, {x.id, weights.id, bias.id}, std::move(at),
              Tensor::from_latent(hiattn::conv3d(z, kern)));
}

Var Tape::bilinear(Var x, std::int64_t h_out, std::int64_t w_out) {
  const BasicLatent<double> z = value(x).latent();
  Attrs at;
  at.h_out = h_out;
  at.w_out = w_out;
  return push(Op::kBilinear, {x.id}, std::move(at),
              Tensor::from_latent(bilinear_resample(z, h_out, w_out)));
}

Var Tape::reshape(Var x, std::vector<std::int64_t> shape) {
  const Tensor& v = value(x);
  if (static_cast<std::size_t>(product(shape)) != v.size()) {
    throw_invalid("reshape " + shape_str(v.shape) + " to " + shape_str(shape) +
                  " changes the element count");
  }
  Attrs at;
  at.shape = shape;
  return push(Op::kReshape, {x.id}, std::move(at), Tensor(std::move(shape), v.data));
}

Var Tape::sum(Var x) {
  const Tensor& v = value(x);
  double s = 0.0;
  for (double e : v.data) s += e;
  return push(Op::kSum, {x.id}, {}, Tensor::scalar(s));
}

Var Tape::dot_const(Var x, Tensor c) {
  const Tensor& v = value(x);
  if (c.size() != v.size()) {
    throw_invalid("dot_const: constant has " + std::to_string(c.size()) + " values, input " +
                  std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v.data[i] * c.data[i];
  Attrs at;
  at.constant = std::move(c);
  return push(Op::kDotConst, {x.id}, std::move(at), Tensor::scalar(s));
}

// ---------------------------------------------------------------------------

std::vector<Tensor> Tape::backward(Var output, const Tensor& cotangent) const {
  const Tensor& out = value(output);
  if (cotangent.shape != out.shape) {
    throw_invalid("cotangent shape " + shape_str(cotangent.shape) + " does not match output " +
                  shape_str(out.shape));
  }
  std::vector<Tensor> g(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  g[static_cast<std::size_t>(output.id)] = cotangent;
  live[static_cast<std::size_t>(output.id)] = true;

  auto accumulate = [&](int id, const Tensor& delta) {
    const auto i = static_cast<std::size_t>(id);
    if (!live[i]) {
      g[i] = Tensor(nodes_[i].value.shape, delta.data);
      live[i] = true;
      return;
    }
    for (std::size_t j = 0; j < delta.size(); ++j) g[i].data[j] += delta.data[j];
  };
  auto acc_mat = [&](int id, const Mat<double>& m) { accumulate(id, Tensor::from_matrix(m)); };
  auto acc_lat = [&](int id, const BasicLatent<double>& z) {
    accumulate(id, Tensor::from_latent(z));
  };

  for (int id = output.id; id >= 0; --id) {
    const auto i = static_cast<std::size_t>(id);
    if (!live[i]) continue;
    const Node& n = nodes_[i];
    const Tensor& dy = g[i];
    const std::vector<int>& in = n.inputs;
    switch (n.op) {
      case Op::kLeaf: break;
      case Op::kMatmul: {
        const Mat<double> d = dy.matrix();
        acc_mat(in[0], d * nodes_[in[1]].value.matrix().transpose());
        acc_mat(in[1], nodes_[in[0]].value.matrix().transpose() * d);
        break;
      }
      case Op::kAdd:
        accumulate(in[0], dy);
        accumulate(in[1], dy);
        break;
      case Op::kMul: {
        Tensor da = dy, db = dy;
        const auto &a = nodes_[in[0]].value.data, &b = nodes_[in[1]].value.data;
        for (std::size_t j = 0; j < dy.size(); ++j) {
          da.data[j] *= b[j];
          db.data[j] *= a[j];
        }
        accumulate(in[0], da);
        accumulate(in[1], db);
        break;
      }
      case Op::kScale: {
        Tensor d = dy;
        for (double& v : d.data) v *= n.attrs.scale;
        accumulate(in[0], d);
        break;
      }
      case Op::kAddRow: {
        const Mat<double> d = dy.matrix();
        accumulate(in[0], dy);
        const RowVec<double> col = d.colwise().sum();
        accumulate(in[1], Tensor(nodes_[in[1]].value.shape,
                                 std::vector<double>(col.data(), col.data() + col.size())));
        break;
      }
      case Op::kSilu: {
        Tensor d = dy;
        const auto& x = nodes_[in[0]].value.data;
        for (std::size_t j = 0; j < d.size(); ++j) d.data[j] *= silu_grad(x[j]);
        accumulate(in[0], d);
        break;
      }
      case Op::kSoftmaxRows: {
        const Mat<double> p = n.value.matrix(), d = dy.matrix();
        Mat<double> dx = p.cwiseProduct(d);
        const Eigen::VectorXd inner = dx.rowwise().sum();
        dx -= p.array().colwise().operator*(inner.array()).matrix();
        acc_mat(in[0], dx);
        break;
      }
      case Op::kLayerNorm: {
        const Mat<double> x = nodes_[in[0]].value.matrix(), d = dy.matrix();
        const Tensor& gain = nodes_[in[1]].value;
        const Eigen::Index cols = x.cols();
        const Eigen::Map<const RowVec<double>> ga(gain.data.data(), cols);
        const LnStats s = ln_stats(x);
        Mat<double> dx(x.rows(), cols);
        RowVec<double> dg = RowVec<double>::Zero(cols), db = RowVec<double>::Zero(cols);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          const auto ri = static_cast<std::size_t>(r);
          const RowVec<double> xh = (x.row(r).array() - s.mean[ri]) * s.inv[ri];
          dg += d.row(r).cwiseProduct(xh);
          db += d.row(r);
          const RowVec<double> dxh = d.row(r).cwiseProduct(ga);
          const double m1 = dxh.mean();
          const double m2 = dxh.cwiseProduct(xh).mean();
          dx.row(r) = s.inv[ri] * (dxh.array() - m1 - xh.array() * m2).matrix();
        }
        acc_mat(in[0], dx);
        accumulate(in[1], Tensor(gain.shape, std::vector<double>(dg.data(), dg.data() + cols)));
        accumulate(in[2], Tensor(nodes_[in[2]].value.shape,
                                 std::vector<double>(db.data(), db.data() + cols)));
        break;
      }
      case Op::kAttnScores: {
        const Mat<double> d = dy.matrix() * n.attrs.scale;
        acc_mat(in[0], d * nodes_[in[1]].value.matrix());
        acc_mat(in[1], d.transpose() * nodes_[in[0]].value.matrix());
        break;
      }
      case Op::kAttnApply: {
        const Mat<double> d = dy.matrix();
        acc_mat(in[0], d * nodes_[in[1]].value.matrix().transpose());
        acc_mat(in[1], nodes_[in[0]].value.matrix().transpose() * d);
        break;
      }
      case Op::kDepthwise: {
        const Tensor& xt = nodes_[in[0]].value;
        const Tensor& wt = nodes_[in[1]].value;
        const Dims d = dims_of(xt), od = dims_of(dy);
        const int k = n.attrs.k;
        const std::int64_t C = d.channels;
        const BasicLatent<double> x = xt.latent(), dyl = dy.latent();
        BasicLatent<double> dx(d);
        std::vector<double> dw(wt.size(), 0.0), db(static_cast<std::size_t>(C), 0.0);
        for (std::int64_t b = 0; b < od.batch; ++b)
          for (std::int64_t t = 0; t < od.frames; ++t)
            for (std::int64_t oh = 0; oh < od.height; ++oh)
              for (std::int64_t ow = 0; ow < od.width; ++ow) {
                const double* go = &dyl.at(b, t, oh, ow, 0);
                for (std::int64_t c = 0; c < C; ++c) db[c] += go[c];
                for (int a = 0; a < k; ++a) {
                  const std::int64_t h = std::min(oh * k + a, d.height - 1);
                  for (int bb = 0; bb < k; ++bb) {
                    const std::int64_t w = std::min(ow * k + bb, d.width - 1);
                    const double* src = &x.at(b, t, h, w, 0);
                    double* gx = &dx.at(b, t, h, w, 0);
                    for (std::int64_t c = 0; c < C; ++c) {
                      const std::size_t wi = static_cast<std::size_t>((c * k + a) * k + bb);
                      gx[c] += wt.data[wi] * go[c];
                      dw[wi] += src[c] * go[c];
                    }
                  }
                }
              }
        acc_lat(in[0], dx);
        accumulate(in[1], Tensor(wt.shape, std::move(dw)));
        accumulate(in[2], Tensor(nodes_[in[2]].value.shape, std::move(db)));
        break;
      }
      case Op::kConv3d: {
        const Tensor& xt = nodes_[in[0]].value;
        const Tensor& wt = nodes_[in[1]].value;
        const Dims d = dims_of(xt);
        const std::int64_t C = d.channels;
        const Attrs& at = n.attrs;
        const BasicLatent<double> x = xt.latent(), dyl = dy.latent();
        BasicLatent<double> dx(d);
        std::vector<double> dw(wt.size(), 0.0);
        using CMap = Eigen::Map<const Mat<double>>;
        using MMap = Eigen::Map<Mat<double>>;
        Mat<double> db = Mat<double>::Zero(1, C);
        for (std::int64_t b = 0; b < d.batch; ++b)
          db += CMap(&dyl.at(b, 0, 0, 0, 0), d.tokens(), C).colwise().sum();
        for (int a = 0; a < at.kt; ++a)
          for (int bb = 0; bb < at.kh; ++bb)
            for (int c = 0; c < at.kw; ++c) {
              const int tap = (a * at.kh + bb) * at.kw + c;
              const std::int64_t dt = a - at.kt / 2, dh = bb - at.kh / 2, dwo = c - at.kw / 2;
              const CMap w(&wt.data[static_cast<std::size_t>(tap * C * C)], C, C);
              MMap gw(&dw[static_cast<std::size_t>(tap * C * C)], C, C);
              const std::int64_t w_lo = std::max<std::int64_t>(0, -dwo);
              const std::int64_t w_hi = std::min<std::int64_t>(d.width, d.width - dwo);
              if (w_hi <= w_lo) continue;
              const std::int64_t len = w_hi - w_lo;
              for (std::int64_t b = 0; b < d.batch; ++b)
                for (std::int64_t t = 0; t < d.frames; ++t) {
                  const std::int64_t st = t + dt;
                  if (st < 0 || st >= d.frames) continue;
                  for (std::int64_t h = 0; h < d.height; ++h) {
                    const std::int64_t sh = h + dh;
                    if (sh < 0 || sh >= d.height) continue;
                    const CMap go(&dyl.at(b, t, h, w_lo, 0), len, C);
                    const CMap src(&x.at(b, st, sh, w_lo + dwo, 0), len, C);
                    MMap gx(&dx.at(b, st, sh, w_lo + dwo, 0), len, C);
                    gx.noalias() += go * w;
                    gw.noalias() += go.transpose() * src;
                  }
                }
            }
        acc_lat(in[0], dx);
        accumulate(in[1], Tensor(wt.shape, std::move(dw)));
        accumulate(in[2], Tensor(nodes_[in[2]].value.shape,
                                 std::vector<double>(db.data(), db.data() + C)));
        break;
      }
      case Op::kBilinear: {
        const Tensor& xt = nodes_[in[0]].value;
        const Dims d = dims_of(xt), od = dims_of(dy);
        const auto rows = resample_taps(d.height, od.height);
        const auto cols = resample_taps(d.width, od.width);
        const BasicLatent<double> dyl = dy.latent();
        BasicLatent<double> dx(d);
        const std::int64_t C = d.channels;
        for (std::int64_t b = 0; b < d.batch; ++b)
          for (std::int64_t t = 0; t < d.frames; ++t)
            for (std::int64_t oh = 0; oh < od.height; ++oh) {
              const ResampleTap& ry = rows[static_cast<std::size_t>(oh)];
              for (std::int64_t ow = 0; ow < od.width; ++ow) {
                const ResampleTap& rx = cols[static_cast<std::size_t>(ow)];
                const double w00 = (1 - ry.frac) * (1 - rx.frac), w01 = (1 - ry.frac) * rx.frac;
                const double w10 = ry.frac * (1 - rx.frac), w11 = ry.frac * rx.frac;
                const double* go = &dyl.at(b, t, oh, ow, 0);
                double* g00 = &dx.at(b, t, ry.lo, rx.lo, 0);
                double* g01 = &dx.at(b, t, ry.lo, rx.hi, 0);
                double* g10 = &dx.at(b, t, ry.hi, rx.lo, 0);
                double* g11 = &dx.at(b, t, ry.hi, rx.hi, 0);
                for (std::int64_t c = 0; c < C; ++c) {
                  g00[c] += w00 * go[c];
                  g01[c] += w01 * go[c];
                  g10[c] += w10 * go[c];
                  g11[c] += w11 * go[c];
                }
              }
            }
        acc_lat(in[0], dx);
        break;
      }
      case Op::kReshape:
        accumulate(in[0], Tensor(nodes_[in[0]].value.shape, dy.data));
        break;
      case Op::kSum: {
        accumulate(in[0], Tensor(nodes_[in[0]].value.shape,
                                 std::vector<double>(nodes_[in[0]].value.size(), dy.data[0])));
        break;
      }
      case Op::kDotConst: {
        Tensor d = n.attrs.constant;
        d.shape = nodes_[in[0]].value.shape;
        for (double& v : d.data) v *= dy.data[0];
        accumulate(in[0], d);
        break;
      }
    }
  }

  std::vector<Tensor> leaves;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::kLeaf) continue;
    leaves.push_back(live[i] ? g[i] : Tensor::zeros(nodes_[i].value.shape));
  }
  return leaves;
}

// ---------------------------------------------------------------------------

Recording record_forward(const Composite& f, std::vector<Tensor> inputs) {
  Recording rec;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (auto& t : inputs) leaves.push_back(rec.tape.leaf(std::move(t)));
  rec.result = f(rec.tape, leaves);
  rec.output = rec.tape.value(rec.result);
  return rec;
}

namespace {

double eval_scalar(const Composite& f, const std::vector<Tensor>& point) {
  const Recording r = record_forward(f, point);
  return r.output.data[0];
}

}  // namespace

double finite_diff_check(const Composite& f, const std::vector<Tensor>& point, double eps) {
  if (!(eps > 0.0)) throw_invalid("finite_diff_check eps must be > 0");
  Recording rec = record_forward(f, point);
  if (rec.output.size() != 1) {
    throw_invalid("finite_diff_check needs a scalar function, output is " +
                  shape_str(rec.output.shape));
  }
  // leaves created inside f are constants; only the first point.size() are inputs
  const std::vector<Tensor> grads =
      rec.tape.backward(rec.result, Tensor(rec.output.shape, {1.0}));
  double worst = 0.0;
  std::vector<Tensor> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    for (std::size_t j = 0; j < point[i].size(); ++j) {
      const double x = point[i].data[j];
      const double h = std::max(eps * std::abs(x), 1e-6);
      probe[i].data[j] = x + h;
      const double fp = eval_scalar(f, probe);
      probe[i].data[j] = x - h;
      const double fm = eval_scalar(f, probe);
      probe[i].data[j] = x;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grads[i].data[j];
      worst = std::max(worst, std::abs(ad - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace hiattn::grad
