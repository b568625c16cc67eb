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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <unistd.h>

#include "hiattn/tensor_io.hpp"

namespace hiattn {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("hiattn_io_" + name + "_" + std::to_string(::getpid()));
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kInvalidArgument;
}

TEST(TensorIo, RoundTripBitwise) {
  const fs::path p = temp_file("rt");
  const VideoLatent z = random_latent({1, 2, 3, 4, 5}, 9);
  write_tensor(p, z);
  EXPECT_TRUE(read_tensor(p) == z);
  fs::remove(p);
}

TEST(TensorIo, ByteLayout) {
  const std::uint32_t shape[2] = {1, 2};
  const float data[2] = {1.0f, -2.5f};
  const auto bytes = encode_tensor(shape, data);
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 8u);
  EXPECT_EQ(std::memcmp(bytes.data(), "UGT1", 4), 0);
  EXPECT_EQ(bytes[4], 2);  // rank, little-endian
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 2);
  // 1.0f = 0x3F800000 little-endian
  EXPECT_EQ(bytes[16], 0x00);
  EXPECT_EQ(bytes[19], 0x3F);
  EXPECT_EQ(bytes[18], 0x80);
  const RawTensor back = decode_tensor(bytes);
  EXPECT_EQ(back.shape, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(back.data, (std::vector<float>{1.0f, -2.5f}));
}

TEST(TensorIo, BadMagic) {
  const std::uint32_t shape[1] = {1};
  const float data[1] = {0.0f};
  auto bytes = encode_tensor(shape, data);
  bytes[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_tensor(bytes); }), ErrorKind::kFormat);
}

TEST(TensorIo, Truncated) {
  const fs::path p = temp_file("trunc");
  write_tensor(p, random_latent({1, 1, 2, 2, 2}, 1));
  fs::resize_file(p, fs::file_size(p) - 3);
  EXPECT_EQ(kind_of([&] { read_tensor(p); }), ErrorKind::kTruncated);
  fs::resize_file(p, 6);
  EXPECT_EQ(kind_of([&] { read_tensor(p); }), ErrorKind::kTruncated);
  fs::remove(p);
}

TEST(TensorIo, TrailingBytesAreFormatError) {
  const std::uint32_t shape[1] = {1};
  const float data[1] = {0.0f};
  auto bytes = encode_tensor(shape, data);
  bytes.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_tensor(bytes); }), ErrorKind::kFormat);
}

TEST(TensorIo, MissingFile) {
  EXPECT_EQ(kind_of([] { read_tensor("/nonexistent/hiattn/file.ugt"); }), ErrorKind::kNotFound);
}

TEST(TensorIo, UnwritablePath) {
  EXPECT_EQ(kind_of([] { write_tensor("/nonexistent/dir/x.ugt", VideoLatent(Dims{})); }),
            ErrorKind::kIo);
}

TEST(TensorIo, LatentNeedsRankFive) {
  const fs::path p = temp_file("rank");
  const std::uint32_t shape[3] = {1, 2, 2};
  const float data[4] = {1, 2, 3, 4};
  write_raw_tensor(p, shape, data);
  EXPECT_EQ(read_raw_tensor(p).data.size(), 4u);
  EXPECT_EQ(kind_of([&] { read_tensor(p); }), ErrorKind::kFormat);
  fs::remove(p);
}

}  // namespace
}  // namespace hiattn
