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

#include <random>
#include <set>

#include "hiattn/latent.hpp"

namespace hiattn {
namespace {

using Bounds = std::vector<std::int64_t>;

TEST(MakePartition, ExactDivision) {
  EXPECT_EQ(make_partition(20, 20, 4).row_bounds, (Bounds{0, 5, 10, 15, 20}));
  EXPECT_EQ(make_partition(20, 20, 5).row_bounds, (Bounds{0, 4, 8, 12, 16, 20}));
}

TEST(MakePartition, FloorRule) {
  const PartitionSpec s = make_partition(5, 5, 2);
  EXPECT_EQ(s.row_bounds, (Bounds{0, 2, 5}));
  EXPECT_EQ(s.window_rows(0), 2);
  EXPECT_EQ(s.window_rows(1), 3);
}

TEST(MakePartition, RejectsOutOfRangeNamingValue) {
  for (int p : {0, -1, 6}) {
    try {
      make_partition(5, 8, p);
      FAIL() << "P=" << p << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kInvalidArgument);
      EXPECT_NE(std::string(e.what()).find(std::to_string(p)), std::string::npos) << e.what();
    }
  }
}

TEST(MakePartition, NearEqualWindowsTileExactly) {
  for (std::int64_t h = 1; h <= 40; ++h)
    for (int p = 1; p <= h; ++p) {
      const PartitionSpec s = make_partition(h, h, p);
      ASSERT_EQ(s.row_bounds.front(), 0);
      ASSERT_EQ(s.row_bounds.back(), h);
      std::int64_t lo = h, hi = 0, total = 0;
      for (int i = 0; i < p; ++i) {
        lo = std::min(lo, s.window_rows(i));
        hi = std::max(hi, s.window_rows(i));
        total += s.window_rows(i);
      }
      EXPECT_LE(hi - lo, 1);
      EXPECT_EQ(total, h);
    }
}

TEST(MakePartition, AdjacentCountsHaveDisjointInteriorBounds) {
  for (int p : {2, 3, 4})
    for (std::int64_t mult = 1; mult <= 4; ++mult) {
      const std::int64_t h = mult * p * (p + 1);
      const auto a = make_partition(h, h, p).row_bounds;
      const auto b = make_partition(h, h, p + 1).row_bounds;
      std::set<std::int64_t> ia(a.begin() + 1, a.end() - 1);
      for (auto it = b.begin() + 1; it != b.end() - 1; ++it) EXPECT_FALSE(ia.count(*it)) << h;
    }
}

TEST(Partition, ExactWindows) {
  const VideoLatent z = random_latent({1, 2, 4, 4, 3}, 1);
  const auto w = partition(z, make_partition(4, 4, 2));
  ASSERT_EQ(w.size(), 4u);
  for (const auto& v : w) EXPECT_EQ(v.dims(), (Dims{1, 2, 2, 2, 3}));
  // window (1, 0) starts at row 2, column 0
  EXPECT_EQ(w[2].at(0, 1, 0, 1, 2), z.at(0, 1, 2, 1, 2));
}

TEST(Partition, UnevenWindows) {
  const VideoLatent z = random_latent({1, 1, 5, 5, 1}, 2);
  const auto w = partition(z, make_partition(5, 5, 2));
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[0].dims().height * 10 + w[0].dims().width, 22);
  EXPECT_EQ(w[1].dims().height * 10 + w[1].dims().width, 23);
  EXPECT_EQ(w[2].dims().height * 10 + w[2].dims().width, 32);
  EXPECT_EQ(w[3].dims().height * 10 + w[3].dims().width, 33);
}

TEST(Partition, SingleWindowIsIdentity) {
  const VideoLatent z = random_latent({2, 2, 3, 5, 2}, 3);
  const auto w = partition(z, make_partition(3, 5, 1));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_TRUE(w[0] == z);
}

TEST(Partition, SpecMismatch) {
  const VideoLatent z = random_latent({1, 1, 4, 4, 1}, 0);
  EXPECT_THROW(partition(z, make_partition(6, 4, 2)), Error);
}

TEST(Aggregate, BlockConstant) {
  const PartitionSpec s = make_partition(4, 4, 2);
  std::vector<VideoLatent> w;
  for (int i = 0; i < 4; ++i) w.emplace_back(Dims{1, 1, 2, 2, 1}, static_cast<float>(i + 1));
  const VideoLatent z = aggregate<float>(w, s);
  for (int h = 0; h < 4; ++h)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(z.at(0, 0, h, c, 0), 1 + (h / 2) * 2 + c / 2);
}

TEST(Aggregate, Mismatch) {
  const PartitionSpec s = make_partition(4, 4, 2);
  std::vector<VideoLatent> three(3, VideoLatent(Dims{1, 1, 2, 2, 1}));
  EXPECT_THROW(aggregate<float>(three, s), Error);
  std::vector<VideoLatent> wrong(4, VideoLatent(Dims{1, 1, 2, 3, 1}));
  EXPECT_THROW(aggregate<float>(wrong, s), Error);
}

TEST(Aggregate, RoundTripProperty) {
  std::mt19937_64 gen(11);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen);
  };
  for (int i = 0; i < 200; ++i) {
    const Dims d{pick(1, 2), pick(1, 3), pick(1, 17), pick(1, 17), pick(1, 3)};
    const int p = static_cast<int>(pick(1, std::min(d.height, d.width)));
    const VideoLatent z = random_latent(d, gen());
    const PartitionSpec s = make_partition(d.height, d.width, p);
    EXPECT_TRUE(aggregate<float>(partition(z, s), s) == z);
  }
}

TEST(RandomLatent, Deterministic) {
  const Dims d{1, 2, 3, 4, 5};
  EXPECT_TRUE(random_latent(d, 42) == random_latent(d, 42));
  EXPECT_FALSE(random_latent(d, 42) == random_latent(d, 43));
}

TEST(RandomLatent, DocumentedGenerator) {
  // one mt19937_64 draw per element, top 24 bits mapped to [-1, 1)
  std::mt19937_64 gen(7);
  const VideoLatent z = random_latent({1, 1, 2, 2, 2}, 7);
  for (float v : z.data()) {
    const double u = static_cast<double>(gen() >> 40) / 16777216.0;
    EXPECT_EQ(v, static_cast<float>(2.0 * u - 1.0));
  }
}

TEST(RandomLatent, SingleElement) {
  const VideoLatent z = random_latent({1, 1, 1, 1, 1}, 0);
  ASSERT_EQ(z.size(), 1u);
  EXPECT_TRUE(z.all_finite());
  EXPECT_GE(z.data()[0], -1.0f);
  EXPECT_LT(z.data()[0], 1.0f);
}

TEST(Dims, Validation) {
  EXPECT_THROW(VideoLatent(Dims{1, 0, 1, 1, 1}), Error);
  EXPECT_THROW(VideoLatent(Dims{1, 1, 1, 1, 2}, std::vector<float>(3)), Error);
}

}  // namespace
}  // namespace hiattn
