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
#include <random>

#include "hiattn/hd_metrics.hpp"
#include "hiattn/oracle.hpp"

namespace hiattn {
namespace {

// Literal per-plane evaluation through the brute-force resampler.
std::array<double, 3> oracle_hd_mse(const VideoLatent& v) {
  const Dims& d = v.dims();
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::int64_t f = std::int64_t{1} << HdMseResult::kExponents[i];
    const std::int64_t h = (d.height + f - 1) / f, w = (d.width + f - 1) / f;
    double sum = 0.0;
    for (std::int64_t b = 0; b < d.batch; ++b)
      for (std::int64_t t = 0; t < d.frames; ++t)
        for (std::int64_t c = 0; c < d.channels; ++c) {
          std::vector<double> plane;
          for (std::int64_t y = 0; y < d.height; ++y)
            for (std::int64_t x = 0; x < d.width; ++x) plane.push_back(v.at(b, t, y, x, c));
          const auto back = brute_force_resample(
              brute_force_resample(plane, d.height, d.width, h, w), h, w, d.height, d.width);
          for (std::size_t k = 0; k < plane.size(); ++k)
            sum += (plane[k] - back[k]) * (plane[k] - back[k]);
        }
    out[i] = sum / static_cast<double>(v.size());
  }
  return out;
}

TEST(HdMse, ConstantIsZero) {
  const HdMseResult r = hd_mse(VideoLatent(Dims{1, 2, 40, 36, 3}, 0.7f));
  for (double v : r.per_factor) EXPECT_NEAR(v, 0.0, 1e-24);
  EXPECT_NEAR(r.total, 0.0, 1e-24);
}

TEST(HdMse, MatchesOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const VideoLatent v = random_latent({1, 2, 64, 64, 2}, seed);
    const HdMseResult r = hd_mse(v);
    const auto want = oracle_hd_mse(v);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.per_factor[i], want[i], 1e-6);
    EXPECT_DOUBLE_EQ(r.total, r.per_factor[0] + r.per_factor[1] + r.per_factor[2]);
  }
}

TEST(HdMse, NonDivisibleExtents) {
  const VideoLatent v = random_latent({1, 1, 45, 33, 1}, 4);
  const auto want = oracle_hd_mse(v);
  const HdMseResult r = hd_mse(v);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.per_factor[i], want[i], 1e-12);
}

// Random video with a 1/f spectrum: sinusoids at log-uniform frequencies,
// amplitude inversely proportional to frequency, plus weak noise.
VideoLatent random_field(std::uint64_t seed, std::int64_t h, std::int64_t w) {
  constexpr double kTwoPi = 6.283185307179586;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> logf(std::log(1.0 / 128), std::log(0.5)),
      angle(0.0, kTwoPi), noise(-0.02, 0.02);
  VideoLatent v(Dims{1, 2, h, w, 1});
  for (std::int64_t t = 0; t < 2; ++t) {
    double fy[12], fx[12], ph[12], a[12];
    for (int k = 0; k < 12; ++k) {
      const double f = std::exp(logf(gen)), dir = angle(gen);
      fy[k] = f * std::sin(dir);
      fx[k] = f * std::cos(dir);
      ph[k] = angle(gen);
      a[k] = 0.01 / f;
    }
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        double s = noise(gen);
        for (int k = 0; k < 12; ++k)
          s += a[k] * std::sin(kTwoPi * (fy[k] * y + fx[k] * x) + ph[k]);
        v.at(0, t, y, x, 0) = static_cast<float>(s);
      }
  }
  return v;
}

TEST(HdMse, CoarserFactorLosesMore) {
  int ordered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const std::int64_t h = 32 + static_cast<std::int64_t>(trial % 5) * 8;
    const HdMseResult r = hd_mse(random_field(100 + trial, h, 40));
    if (r.per_factor[2] >= r.per_factor[0]) ++ordered;
  }
  EXPECT_GE(ordered, 95) << ordered;
}

TEST(HdMse, ScaleAndShift) {
  const VideoLatent v = random_latent({1, 1, 32, 48, 2}, 5);
  VideoLatent scaled = v, shifted = v;
  for (float& x : scaled.data()) x *= 2.0f;
  for (float& x : shifted.data()) x += 3.0f;
  const HdMseResult r = hd_mse(v), rs = hd_mse(scaled), rt = hd_mse(shifted);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(rs.per_factor[i], 4.0 * r.per_factor[i], 1e-12);
    EXPECT_NEAR(rt.per_factor[i], r.per_factor[i], 1e-6);
  }
}

TEST(HdMse, RejectsSmallFrames) {
  EXPECT_THROW(hd_mse(VideoLatent(Dims{1, 1, 16, 16, 1})), Error);
  EXPECT_THROW(hd_mse(VideoLatent(Dims{1, 1, 64, 31, 1})), Error);
  EXPECT_NO_THROW(hd_mse(VideoLatent(Dims{1, 1, 32, 32, 1})));
}

}  // namespace
}  // namespace hiattn
