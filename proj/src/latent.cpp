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

#include "hiattn/latent.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace hiattn {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kTruncated: return "truncated payload";
    case ErrorKind::kUnsupportedOp: return "unsupported op";
    case ErrorKind::kResourceLimit: return "resource limit";
    case ErrorKind::kNotFound: return "not found";
  }
  return "unknown";
}

void Dims::validate() const {
  const auto a = as_array();
  static constexpr const char* kNames[] = {"B", "T", "H", "W", "D"};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 1) {
      throw_invalid(std::string("latent dim ") + kNames[i] + " must be >= 1, got " +
                    std::to_string(a[i]));
    }
  }
}

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << "(" << d.batch << "," << d.frames << "," << d.height << "," << d.width
     << "," << d.channels << ")";
  return os.str();
}

template <typename T>
BasicLatent<T>::BasicLatent(const Dims& dims, std::vector<T> data)
    : dims_(dims), data_(std::move(data)) {
  dims_.validate();
  if (data_.size() != static_cast<std::size_t>(dims_.count())) {
    throw_invalid("latent data length " + std::to_string(data_.size()) +
                  " does not match dims " + to_string(dims_));
  }
}

template <typename T>
bool BasicLatent<T>::all_finite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class BasicLatent<float>;
template class BasicLatent<double>;

PartitionSpec make_partition(std::int64_t height, std::int64_t width, int parts) {
  if (height < 1 || width < 1) {
    throw_invalid("partition extents must be positive, got H=" +
                  std::to_string(height) + " W=" + std::to_string(width));
  }
  if (parts < 1 || parts > std::min(height, width)) {
    throw_invalid("partition count P=" + std::to_string(parts) +
                  " out of range [1, min(H, W)=" +
                  std::to_string(std::min(height, width)) + "]");
  }
  PartitionSpec spec;
  spec.parts = parts;
  spec.row_bounds.resize(parts + 1);
  spec.col_bounds.resize(parts + 1);
  for (int i = 0; i <= parts; ++i) {
    spec.row_bounds[i] = i * height / parts;
    spec.col_bounds[i] = i * width / parts;
  }
  return spec;
}

template <typename T>
std::vector<BasicLatent<T>> partition(const BasicLatent<T>& z,
                                      const PartitionSpec& spec) {
  const Dims& d = z.dims();
  if (spec.height() != d.height || spec.width() != d.width) {
    throw_invalid("partition spec built for " + std::to_string(spec.height()) +
                  "x" + std::to_string(spec.width()) + " but latent is " +
                  std::to_string(d.height) + "x" + std::to_string(d.width));
  }
  std::vector<BasicLatent<T>> out;
  out.reserve(spec.window_count());
  for (int i = 0; i < spec.parts; ++i) {
    for (int j = 0; j < spec.parts; ++j) {
      Dims wd = d;
      wd.height = spec.window_rows(i);
      wd.width = spec.window_cols(j);
      BasicLatent<T> win(wd);
      const std::int64_t r0 = spec.row_bounds[i];
      const std::int64_t c0 = spec.col_bounds[j];
      for (std::int64_t b = 0; b < d.batch; ++b)
        for (std::int64_t t = 0; t < d.frames; ++t)
          for (std::int64_t h = 0; h < wd.height; ++h) {
            const T* src = &z.at(b, t, r0 + h, c0, 0);
            std::copy(src, src + wd.width * d.channels, &win.at(b, t, h, 0, 0));
          }
      out.push_back(std::move(win));
    }
  }
  return out;
}

template <typename T>
BasicLatent<T> aggregate(std::span<const BasicLatent<T>> windows,
                         const PartitionSpec& spec) {
  if (windows.size() != spec.window_count()) {
    throw_invalid("aggregate expected " + std::to_string(spec.window_count()) +
                  " windows, got " + std::to_string(windows.size()));
  }
  Dims d = windows.front().dims();
  d.height = spec.height();
  d.width = spec.width();
  BasicLatent<T> z(d);
  for (int i = 0; i < spec.parts; ++i) {
    for (int j = 0; j < spec.parts; ++j) {
      const BasicLatent<T>& win = windows[static_cast<std::size_t>(i * spec.parts + j)];
      const Dims& wd = win.dims();
      if (wd.batch != d.batch || wd.frames != d.frames || wd.channels != d.channels ||
          wd.height != spec.window_rows(i) || wd.width != spec.window_cols(j)) {
        throw_invalid("window (" + std::to_string(i) + "," + std::to_string(j) +
                      ") has dims " + to_string(wd) + ", expected spatial " +
                      std::to_string(spec.window_rows(i)) + "x" +
                      std::to_string(spec.window_cols(j)));
      }
      const std::int64_t r0 = spec.row_bounds[i];
      const std::int64_t c0 = spec.col_bounds[j];
      for (std::int64_t b = 0; b < d.batch; ++b)
        for (std::int64_t t = 0; t < d.frames; ++t)
          for (std::int64_t h = 0; h < wd.height; ++h) {
            const T* src = &win.at(b, t, h, 0, 0);
            std::copy(src, src + wd.width * d.channels, &z.at(b, t, r0 + h, c0, 0));
          }
    }
  }
  return z;
}

template std::vector<BasicLatent<float>> partition(const BasicLatent<float>&,
                                                   const PartitionSpec&);
template std::vector<BasicLatent<double>> partition(const BasicLatent<double>&,
                                                    const PartitionSpec&);
template BasicLatent<float> aggregate(std::span<const BasicLatent<float>>,
                                      const PartitionSpec&);
template BasicLatent<double> aggregate(std::span<const BasicLatent<double>>,
                                       const PartitionSpec&);

VideoLatent random_latent(const Dims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 gen(seed);
  std::vector<float> data(static_cast<std::size_t>(dims.count()));
  for (float& v : data) {
    const auto bits = static_cast<std::uint32_t>(gen() >> 40);
    v = 2.0f * (static_cast<float>(bits) * 0x1p-24f) - 1.0f;
  }
  return VideoLatent(dims, std::move(data));
}

}  // namespace hiattn
