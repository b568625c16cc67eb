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
#include <filesystem>
#include <span>
#include <vector>

#include "hiattn/latent.hpp"

namespace hiattn {

/// On-disk layout: "UGT1", u32 rank, rank x u32 dims, then the row-major
/// binary32 payload. Every integer and float is little-endian; there is no
/// padding and no checksum.
inline constexpr char kTensorMagic[4] = {'U', 'G', 'T', '1'};

/// A tensor of any rank, as stored on disk.
struct RawTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> shape,
                                        std::span<const float> data);
RawTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_raw_tensor(const std::filesystem::path& path,
                      std::span<const std::uint32_t> shape,
                      std::span<const float> data);
RawTensor read_raw_tensor(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const VideoLatent& z);
/// Reads a rank-5 tensor file as a latent; other ranks are a format error.
VideoLatent read_tensor(const std::filesystem::path& path);

}  // namespace hiattn
