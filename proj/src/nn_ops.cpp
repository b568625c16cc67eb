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

#include "hiattn/nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace hiattn {

template <typename T>
void softmax_rows(Eigen::Ref<Mat<T>> m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r).array();
    const T mx = row.maxCoeff();
    row = (row - mx).exp();
    const T sum = row.sum();
    row /= sum;
  }
}

template <typename T>
std::vector<T> softmax(std::span<const T> x) {
  if (x.empty()) throw_invalid("softmax of an empty vector");
  Mat<T> m(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), m.data());
  softmax_rows<T>(m);
  return std::vector<T>(m.data(), m.data() + m.size());
}

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b, const ExecContext* ctx,
              bool attention_map) {
  if (a.cols() != b.rows()) {
    throw_invalid("matmul inner dims differ: " + std::to_string(a.cols()) + " vs " +
                  std::to_string(b.rows()));
  }
  Mat<T> out = a * b;
  if (ctx) {
    ctx->count(2ull * static_cast<std::uint64_t>(a.rows()) *
                   static_cast<std::uint64_t>(a.cols()) *
                   static_cast<std::uint64_t>(b.cols()),
               attention_map);
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
DepthwiseKernel2D<T> DepthwiseKernel2D<T>::averaging(std::int64_t channels, int k) {
  if (k < 1) throw_invalid("depthwise kernel size must be >= 1, got " + std::to_string(k));
  if (channels < 1) throw_invalid("depthwise kernel needs >= 1 channel");
  DepthwiseKernel2D kern;
  kern.k = k;
  kern.channels = channels;
  kern.weights.assign(static_cast<std::size_t>(channels * k * k), T(1) / T(k * k));
  kern.bias.assign(static_cast<std::size_t>(channels), T(0));
  return kern;
}

template <typename T>
BasicLatent<T> depthwise_compress(const BasicLatent<T>& z, const DepthwiseKernel2D<T>& kern,
                                  EdgeMode mode) {
  const Dims& d = z.dims();
  const int k = kern.k;
  if (kern.channels != d.channels ||
      kern.weights.size() != static_cast<std::size_t>(d.channels * k * k) ||
      kern.bias.size() != static_cast<std::size_t>(d.channels)) {
    throw_invalid("depthwise kernel built for " + std::to_string(kern.channels) +
                  " channels, latent has " + std::to_string(d.channels));
  }
  if (mode == EdgeMode::kStrict) {
    if (d.height % k != 0) {
      throw_invalid("depthwise_compress: H=" + std::to_string(d.height) +
                    " is not divisible by k=" + std::to_string(k));
    }
    if (d.width % k != 0) {
      throw_invalid("depthwise_compress: W=" + std::to_string(d.width) +
                    " is not divisible by k=" + std::to_string(k));
    }
  }
  Dims od = d;
  od.height = (d.height + k - 1) / k;
  od.width = (d.width + k - 1) / k;
  BasicLatent<T> out(od);
  const std::int64_t C = d.channels;
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t oh = 0; oh < od.height; ++oh)
        for (std::int64_t ow = 0; ow < od.width; ++ow) {
          T* dst = &out.at(b, t, oh, ow, 0);
          for (std::int64_t c = 0; c < C; ++c) dst[c] = kern.bias[c];
          for (int a = 0; a < k; ++a) {
            const std::int64_t h = std::min(oh * k + a, d.height - 1);
            for (int bb = 0; bb < k; ++bb) {
              const std::int64_t w = std::min(ow * k + bb, d.width - 1);
              const T* src = &z.at(b, t, h, w, 0);
              for (std::int64_t c = 0; c < C; ++c) dst[c] += kern.w(c, a, bb) * src[c];
            }
          }
        }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ResampleTap> resample_taps(std::int64_t in, std::int64_t out) {
  if (in < 1 || out < 1) throw_invalid("resample extents must be >= 1");
  std::vector<ResampleTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    ResampleTap& tp = taps[static_cast<std::size_t>(o)];
    tp.lo = static_cast<std::int64_t>(std::floor(s));
    tp.hi = std::min(tp.lo + 1, in - 1);
    tp.frac = s - static_cast<double>(tp.lo);
  }
  return taps;
}

template <typename T>
BasicLatent<T> bilinear_resample(const BasicLatent<T>& z, std::int64_t h_out,
                                 std::int64_t w_out) {
  if (h_out < 1 || w_out < 1) {
    throw_invalid("bilinear_resample output size must be >= 1, got " +
                  std::to_string(h_out) + "x" + std::to_string(w_out));
  }
  const Dims& d = z.dims();
  const auto rows = resample_taps(d.height, h_out);
  const auto cols = resample_taps(d.width, w_out);
  Dims od = d;
  od.height = h_out;
  od.width = w_out;
  BasicLatent<T> out(od);
  const std::int64_t C = d.channels;
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t oh = 0; oh < h_out; ++oh) {
        const ResampleTap& ry = rows[static_cast<std::size_t>(oh)];
        const T fy = static_cast<T>(ry.frac);
        for (std::int64_t ow = 0; ow < w_out; ++ow) {
          const ResampleTap& rx = cols[static_cast<std::size_t>(ow)];
          const T fx = static_cast<T>(rx.frac);
          const T* p00 = &z.at(b, t, ry.lo, rx.lo, 0);
          const T* p01 = &z.at(b, t, ry.lo, rx.hi, 0);
          const T* p10 = &z.at(b, t, ry.hi, rx.lo, 0);
          const T* p11 = &z.at(b, t, ry.hi, rx.hi, 0);
          T* dst = &out.at(b, t, oh, ow, 0);
          for (std::int64_t c = 0; c < C; ++c) {
            // lerp form keeps constants and same-size resamples exact
            const T top = p00[c] + fx * (p01[c] - p00[c]);
            const T bot = p10[c] + fx * (p11[c] - p10[c]);
            dst[c] = top + fy * (bot - top);
          }
        }
      }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
void Kernel3D<T>::validate() const {
  if (kt < 1 || kh < 1 || kw < 1 || kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0) {
    throw_invalid("conv3d kernel extents must be odd, got " + std::to_string(kt) + "x" +
                  std::to_string(kh) + "x" + std::to_string(kw));
  }
  if (weights.size() != static_cast<std::size_t>(taps() * channels * channels) ||
      bias.size() != static_cast<std::size_t>(channels)) {
    throw_invalid("conv3d kernel storage does not match its extents");
  }
}

template <typename T>
Kernel3D<T> Kernel3D<T>::zeros(std::int64_t channels, int kt, int kh, int kw) {
  Kernel3D k;
  k.kt = kt;
  k.kh = kh;
  k.kw = kw;
  k.channels = channels;
  if (channels < 1) throw_invalid("conv3d kernel needs >= 1 channel");
  k.weights.assign(static_cast<std::size_t>(kt * kh * kw * channels * channels), T(0));
  k.bias.assign(static_cast<std::size_t>(channels), T(0));
  k.validate();
  return k;
}

template <typename T>
Kernel3D<T> Kernel3D<T>::identity(std::int64_t channels, int kt, int kh, int kw) {
  Kernel3D k = zeros(channels, kt, kh, kw);
  const int c = k.center_tap();
  for (std::int64_t i = 0; i < channels; ++i) k.w(c, i, i) = T(1);
  return k;
}

template <typename T>
BasicLatent<T> conv3d(const BasicLatent<T>& z, const Kernel3D<T>& kern,
                      const ExecContext* ctx) {
  kern.validate();
  const Dims& d = z.dims();
  const std::int64_t C = d.channels;
  if (kern.channels != C) {
    throw_invalid("conv3d kernel has " + std::to_string(kern.channels) +
                  " channels, latent has " + std::to_string(C));
  }
  BasicLatent<T> out(d);
  using ConstMap = Eigen::Map<const Mat<T>>;
  using MutMap = Eigen::Map<Mat<T>>;
  const Eigen::Map<const RowVec<T>> bias(kern.bias.data(), C);
  for (std::int64_t b = 0; b < d.batch; ++b) {
    MutMap all(&out.at(b, 0, 0, 0, 0), d.tokens(), C);
    all.rowwise() = bias;
  }
  std::uint64_t flops = 0;
  for (int a = 0; a < kern.kt; ++a)
    for (int bb = 0; bb < kern.kh; ++bb)
      for (int c = 0; c < kern.kw; ++c) {
        const int tap = (a * kern.kh + bb) * kern.kw + c;
        const std::int64_t dt = a - kern.kt / 2;
        const std::int64_t dh = bb - kern.kh / 2;
        const std::int64_t dw = c - kern.kw / 2;
        // [out][in] block; out_row += in_row * W^T
        const ConstMap wt(&kern.weights[static_cast<std::size_t>(tap * C * C)], C, C);
        const std::int64_t w_lo = std::max<std::int64_t>(0, -dw);
        const std::int64_t w_hi = std::min<std::int64_t>(d.width, d.width - dw);
        if (w_hi <= w_lo) continue;
        const std::int64_t len = w_hi - w_lo;
        for (std::int64_t b = 0; b < d.batch; ++b)
          for (std::int64_t t = 0; t < d.frames; ++t) {
            const std::int64_t st = t + dt;
            if (st < 0 || st >= d.frames) continue;
            for (std::int64_t h = 0; h < d.height; ++h) {
              const std::int64_t sh = h + dh;
              if (sh < 0 || sh >= d.height) continue;
              MutMap dst(&out.at(b, t, h, w_lo, 0), len, C);
              const ConstMap src(&z.at(b, st, sh, w_lo + dw, 0), len, C);
              dst.noalias() += src * wt.transpose();
              flops += 2ull * static_cast<std::uint64_t>(len * C * C);
            }
          }
      }
  if (ctx) ctx->count(flops, false);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> sin_encode(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw_invalid("sin_encode dim must be even and >= 2, got " + std::to_string(dim));
  }
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int j = 0; j < half; ++j) {
    const double freq = std::pow(10000.0, -2.0 * j / dim);
    out[static_cast<std::size_t>(j)] = std::sin(t * freq);
    out[static_cast<std::size_t>(j + half)] = std::cos(t * freq);
  }
  return out;
}

template <typename T>
void MLP2<T>::validate() const {
  if (b1.size() != w1.cols() || w2.rows() != w1.cols() || b2.size() != w2.cols()) {
    throw_invalid("MLP2 shapes inconsistent: W1 " + std::to_string(w1.rows()) + "x" +
                  std::to_string(w1.cols()) + ", b1 " + std::to_string(b1.size()) +
                  ", W2 " + std::to_string(w2.rows()) + "x" + std::to_string(w2.cols()) +
                  ", b2 " + std::to_string(b2.size()));
  }
}

template <typename T>
std::vector<T> mlp_forward(std::span<const T> x, const MLP2<T>& mlp) {
  mlp.validate();
  if (static_cast<Eigen::Index>(x.size()) != mlp.in_dim()) {
    throw_invalid("mlp_forward input has " + std::to_string(x.size()) +
                  " entries, MLP expects " + std::to_string(mlp.in_dim()));
  }
  const Eigen::Map<const RowVec<T>> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  RowVec<T> h = xv * mlp.w1 + mlp.b1;
  h = h.unaryExpr([](T v) { return silu(v); });
  RowVec<T> y = h * mlp.w2 + mlp.b2;
  return std::vector<T>(y.data(), y.data() + y.size());
}

#define HIATTN_INSTANTIATE(T)                                                          \
  template std::vector<T> softmax<T>(std::span<const T>);                              \
  template void softmax_rows<T>(Eigen::Ref<Mat<T>>);                                   \
  template Mat<T> matmul<T>(const Mat<T>&, const Mat<T>&, const ExecContext*, bool);   \
  template struct DepthwiseKernel2D<T>;                                                \
  template BasicLatent<T> depthwise_compress<T>(const BasicLatent<T>&,                 \
                                                const DepthwiseKernel2D<T>&, EdgeMode); \
  template BasicLatent<T> bilinear_resample<T>(const BasicLatent<T>&, std::int64_t,    \
                                               std::int64_t);                          \
  template struct Kernel3D<T>;                                                         \
  template BasicLatent<T> conv3d<T>(const BasicLatent<T>&, const Kernel3D<T>&,         \
                                    const ExecContext*);                               \
  template struct MLP2<T>;                                                             \
  template std::vector<T> mlp_forward<T>(std::span<const T>, const MLP2<T>&);

HIATTN_INSTANTIATE(float)
HIATTN_INSTANTIATE(double)

#undef HIATTN_INSTANTIATE

}  // namespace hiattn
