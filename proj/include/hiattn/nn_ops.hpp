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

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hiattn/exec.hpp"
#include "hiattn/latent.hpp"

namespace hiattn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Dense primitives
// ---------------------------------------------------------------------------

/// Max-subtracted softmax of a finite, non-empty vector.
template <typename T>
std::vector<T> softmax(std::span<const T> x);

/// Row-wise softmax in place. Same arithmetic as softmax() for each row.
template <typename T>
void softmax_rows(Eigen::Ref<Mat<T>> m);

/// a * b; adds 2*m*k*n to ctx's counter when one is attached.
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b, const ExecContext* ctx = nullptr,
              bool attention_map = false);

/// Sigmoid-weighted linear unit x * sigmoid(x); the activation used by every
/// FFN and MLP in the library.
template <typename T>
inline T silu(T x) {
  return x / (T(1) + std::exp(-x));
}
template <typename T>
inline T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

// ---------------------------------------------------------------------------
// Spatial compression
// ---------------------------------------------------------------------------

/// One k x k kernel per channel, applied with stride k.
template <typename T>
struct DepthwiseKernel2D {
  int k = 1;
  std::int64_t channels = 1;
  std::vector<T> weights;  // [channel][row][col]
  std::vector<T> bias;     // [channel]

  /// Every tap 1/(k*k), zero bias: k x k average pooling.
  static DepthwiseKernel2D averaging(std::int64_t channels, int k);

  T& w(std::int64_t c, int a, int b) { return weights[(c * k + a) * k + b]; }
  const T& w(std::int64_t c, int a, int b) const { return weights[(c * k + a) * k + b]; }
};

enum class EdgeMode {
  kStrict,     // H and W must be multiples of k
  kReplicate,  // ceil-size output; taps past the edge read the last row/col
};

template <typename T>
BasicLatent<T> depthwise_compress(const BasicLatent<T>& z, const DepthwiseKernel2D<T>& kern,
                                  EdgeMode mode = EdgeMode::kStrict);

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Source taps for one output coordinate under half-pixel bilinear sampling:
/// s = (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
struct ResampleTap {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  double frac = 0.0;
};
std::vector<ResampleTap> resample_taps(std::int64_t in, std::int64_t out);

/// Per-frame, per-channel half-pixel bilinear resize of H x W to
/// h_out x w_out.
template <typename T>
BasicLatent<T> bilinear_resample(const BasicLatent<T>& z, std::int64_t h_out,
                                 std::int64_t w_out);

// ---------------------------------------------------------------------------
// 3D convolution
// ---------------------------------------------------------------------------

/// Full-channel (D -> D) kernel over (T, H, W) with odd extents, stride 1 and
/// zero padding.
template <typename T>
struct Kernel3D {
  int kt = 3, kh = 3, kw = 3;
  std::int64_t channels = 1;
  std::vector<T> weights;  // [tap][out][in], tap = (a * kh + b) * kw + c
  std::vector<T> bias;     // [out]

  int taps() const { return kt * kh * kw; }
  int center_tap() const { return ((kt / 2) * kh + kh / 2) * kw + kw / 2; }
  T& w(int tap, std::int64_t out, std::int64_t in) {
    return weights[(tap * channels + out) * channels + in];
  }
  const T& w(int tap, std::int64_t out, std::int64_t in) const {
    return weights[(tap * channels + out) * channels + in];
  }

  static Kernel3D zeros(std::int64_t channels, int kt = 3, int kh = 3, int kw = 3);
  /// Centre tap is the channel identity, everything else 0.
  static Kernel3D identity(std::int64_t channels, int kt = 3, int kh = 3, int kw = 3);
  void validate() const;
};

template <typename T>
BasicLatent<T> conv3d(const BasicLatent<T>& z, const Kernel3D<T>& kern,
                      const ExecContext* ctx = nullptr);

// ---------------------------------------------------------------------------
// Timestep encoding
// ---------------------------------------------------------------------------

/// [sin(t w_0) .. sin(t w_{n-1}), cos(t w_0) .. cos(t w_{n-1})] with
/// n = dim / 2 and w_j = 10000^(-2j/dim).
std::vector<double> sin_encode(double t, int dim = 256);

/// Two-layer perceptron on row vectors: silu(x W1 + b1) W2 + b2.
template <typename T>
struct MLP2 {
  Mat<T> w1;     // in x hidden
  RowVec<T> b1;  // hidden
  Mat<T> w2;     // hidden x out
  RowVec<T> b2;  // out

  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index out_dim() const { return w2.cols(); }
  void validate() const;
};

template <typename T>
std::vector<T> mlp_forward(std::span<const T> x, const MLP2<T>& mlp);

}  // namespace hiattn
