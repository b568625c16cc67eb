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

#include "hiattn/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace hiattn {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> shape,
                                        std::span<const float> data) {
  std::uint64_t count = 1;
  for (auto s : shape) count *= s;
  if (count != data.size()) {
    throw_invalid("tensor shape holds " + std::to_string(count) +
                  " elements but payload has " + std::to_string(data.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * shape.size() + 4 * data.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto s : shape) put_u32(out, s);
  for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

RawTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, "bad magic: not a UGT1 tensor file");
  }
  if (bytes.size() < 8) throw Error(ErrorKind::kTruncated, "header truncated before rank");
  const std::uint32_t rank = get_u32(bytes.data() + 4);
  if (rank > kMaxRank) {
    throw Error(ErrorKind::kFormat, "implausible tensor rank " + std::to_string(rank));
  }
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw Error(ErrorKind::kTruncated, "header truncated in dims");

  RawTensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.shape.push_back(get_u32(bytes.data() + 8 + 4 * i));
    count *= t.shape.back();
    if (count > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorKind::kFormat, "tensor element count overflows");
    }
  }
  const std::size_t expected = header + 4 * static_cast<std::size_t>(count);
  if (bytes.size() < expected) {
    throw Error(ErrorKind::kTruncated,
                "payload truncated: expected " + std::to_string(expected) +
                    " bytes, file has " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::kFormat, "trailing bytes after tensor payload");
  }
  t.data.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  }
  return t;
}

void write_raw_tensor(const std::filesystem::path& path,
                      std::span<const std::uint32_t> shape,
                      std::span<const float> data) {
  const auto bytes = encode_tensor(shape, data);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

RawTensor read_raw_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorKind::kNotFound, "no such file: " + path.string());
    }
    throw Error(ErrorKind::kIo, "cannot open for reading: " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (is.bad()) throw Error(ErrorKind::kIo, "read failed: " + path.string());
  return decode_tensor(bytes);
}

void write_tensor(const std::filesystem::path& path, const VideoLatent& z) {
  std::vector<std::uint32_t> shape;
  for (auto d : z.dims().as_array()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw_invalid("dim exceeds u32");
    shape.push_back(static_cast<std::uint32_t>(d));
  }
  write_raw_tensor(path, shape, z.data());
}

VideoLatent read_tensor(const std::filesystem::path& path) {
  RawTensor t = read_raw_tensor(path);
  if (t.shape.size() != 5) {
    throw Error(ErrorKind::kFormat, "expected a rank-5 (B,T,H,W,D) tensor, got rank " +
                                        std::to_string(t.shape.size()));
  }
  for (auto s : t.shape) {
    if (s == 0) throw Error(ErrorKind::kFormat, "latent tensor has a zero dim");
  }
  Dims d{t.shape[0], t.shape[1], t.shape[2], t.shape[3], t.shape[4]};
  return VideoLatent(d, std::move(t.data));
}

}  // namespace hiattn
