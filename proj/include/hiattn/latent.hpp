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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiattn/errors.hpp"

namespace hiattn {

/// Extents of a video latent, in canonical (B, T, H, W, D) order.
struct Dims {
  std::int64_t batch = 1;
  std::int64_t frames = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  std::int64_t channels = 1;

  std::int64_t count() const noexcept {
    return batch * frames * height * width * channels;
  }
  /// Tokens per batch element (T * H * W).
  std::int64_t tokens() const noexcept { return frames * height * width; }
  std::array<std::int64_t, 5> as_array() const noexcept {
    return {batch, frames, height, width, channels};
  }
  void validate() const;

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

/// Dense row-major (B, T, H, W, D) array. Each token's D channels are
/// contiguous, so a (T, H, W) slab of one batch element is an N x D matrix.
template <typename T>
class BasicLatent {
 public:
  using value_type = T;

  BasicLatent() = default;
  explicit BasicLatent(const Dims& dims, T fill = T(0))
      : dims_(dims), data_((dims.validate(), static_cast<std::size_t>(dims.count())), fill) {}
  BasicLatent(const Dims& dims, std::vector<T> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  std::size_t offset(std::int64_t b, std::int64_t t, std::int64_t h,
                     std::int64_t w, std::int64_t d) const noexcept {
    return static_cast<std::size_t>(
        (((b * dims_.frames + t) * dims_.height + h) * dims_.width + w) *
            dims_.channels + d);
  }
  T& at(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t w,
        std::int64_t d) noexcept {
    return data_[offset(b, t, h, w, d)];
  }
  const T& at(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t w,
              std::int64_t d) const noexcept {
    return data_[offset(b, t, h, w, d)];
  }

  template <typename U>
  BasicLatent<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicLatent<U>(dims_, std::move(out));
  }

  bool all_finite() const noexcept;

  friend bool operator==(const BasicLatent&, const BasicLatent&) = default;

 private:
  Dims dims_{};
  std::vector<T> data_;
};

using VideoLatent = BasicLatent<float>;

/// Tiling of (H, W) into parts x parts windows. Boundaries follow
/// bound[i] = floor(i * extent / parts), so window extents differ by at most 1
/// and the longer windows come last.
struct PartitionSpec {
  int parts = 1;
  std::vector<std::int64_t> row_bounds;
  std::vector<std::int64_t> col_bounds;

  std::int64_t height() const noexcept { return row_bounds.back(); }
  std::int64_t width() const noexcept { return col_bounds.back(); }
  std::int64_t window_rows(int i) const noexcept {
    return row_bounds[i + 1] - row_bounds[i];
  }
  std::int64_t window_cols(int j) const noexcept {
    return col_bounds[j + 1] - col_bounds[j];
  }
  std::size_t window_count() const noexcept {
    return static_cast<std::size_t>(parts) * static_cast<std::size_t>(parts);
  }

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

PartitionSpec make_partition(std::int64_t height, std::int64_t width, int parts);

/// Windows in row-major window order; window (i, j) is at index i * parts + j.
template <typename T>
std::vector<BasicLatent<T>> partition(const BasicLatent<T>& z,
                                      const PartitionSpec& spec);

template <typename T>
BasicLatent<T> aggregate(std::span<const BasicLatent<T>> windows,
                         const PartitionSpec& spec);

/// Uniform values in [-1, 1) from std::mt19937_64 seeded with `seed`. Each
/// element consumes one 64-bit draw and keeps its top 24 bits, u = bits / 2^24,
/// value = 2u - 1. All steps are exact in binary32, so output is bitwise
/// identical on every conforming platform.
VideoLatent random_latent(const Dims& dims, std::uint64_t seed);

extern template class BasicLatent<float>;
extern template class BasicLatent<double>;

}  // namespace hiattn
