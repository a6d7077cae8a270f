// Copyright 2026 The EegMesh Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Explicit little-endian binary IO. Cache and checkpoint files are defined
// byte-for-byte so they stay stable across platforms.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "eegmesh/errors.hpp"

namespace eegmesh {

class BinaryWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void raw(std::span<const unsigned char> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void tag(const char (&magic)[5]) { bytes_.insert(bytes_.end(), magic, magic + 4); }

  void f32_span(std::span<const float> v) {
    for (float x : v) f32(x);
  }

  const std::vector<unsigned char>& bytes() const { return bytes_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw DataError("short write to " + path.string());
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  std::vector<unsigned char> bytes_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  static BinaryReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return BinaryReader(std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                                   std::istreambuf_iterator<char>()));
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void expect_tag(const char (&magic)[5], const char* what) {
    if (pos_ + 4 > bytes_.size() || std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
      throw BadCheckpoint(std::string("bad magic for ") + what);
    pos_ += 4;
  }
  void f32_into(std::span<float> out) {
    for (auto& v : out) v = f32();
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t le(int n) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size())
      throw BadCheckpoint("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

/// FNV-1a, used for cache invalidation and leakage guards.
inline std::uint64_t fnv1a(std::span<const unsigned char> data, std::uint64_t seed = 14695981039346656037ULL) {
  std::uint64_t h = seed;
  for (unsigned char b : data) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    auto got = in.gcount();
    h = fnv1a({reinterpret_cast<const unsigned char*>(buf), static_cast<std::size_t>(got)}, h);
  }
  return h;
}

}  // namespace eegmesh
