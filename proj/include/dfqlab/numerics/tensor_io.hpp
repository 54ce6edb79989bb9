/* Copyright 2026 The dfqlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/tensor.hpp"

// Binary tensor container:
//   "DFQT" | version u8 | rank u8 | extents u32 LE x rank | dtype u8 | data LE
// dtype 0 = f32, 1 = f64.
namespace dfq::io {

inline constexpr std::array<char, 4> kTensorMagic = {'D', 'F', 'Q', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

static_assert(std::endian::native == std::endian::little,
              "tensor IO assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("unexpected end of stream");
  return v;
}

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  require(t.rank() <= 255, "tensor rank too large");
  os.write(kTensorMagic.data(), kTensorMagic.size());
  write_pod<std::uint8_t>(os, kTensorVersion);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) {
    require(e <= 0xffffffffu, "tensor extent exceeds u32");
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  }
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
}

namespace detail {

struct Header {
  Shape shape;
  DType dtype;
};

inline Header read_header(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kTensorMagic) throw ParseError("bad tensor magic");
  const auto version = read_pod<std::uint8_t>(is);
  if (version != kTensorVersion)
    throw ParseError("unsupported tensor version " + std::to_string(version));
  const auto rank = read_pod<std::uint8_t>(is);
  Header h;
  for (int i = 0; i < rank; ++i) {
    const auto e = read_pod<std::uint32_t>(is);
    if (e == 0) throw ParseError("zero tensor extent");
    h.shape.push_back(e);
  }
  const auto tag = read_pod<std::uint8_t>(is);
  if (tag > 1) throw ParseError("unknown dtype tag " + std::to_string(tag));
  h.dtype = static_cast<DType>(tag);
  return h;
}

template <typename S>
std::vector<S> read_payload(std::istream& is, std::size_t n) {
  std::vector<S> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(S)));
  if (!is) throw ParseError("truncated tensor payload");
  return v;
}

}  // namespace detail

// Reads a tensor, converting from the stored dtype to T when they differ.
template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  const auto h = detail::read_header(is);
  const std::size_t n = shape_numel(h.shape);
  if (h.dtype == DType::kF32) {
    auto raw = detail::read_payload<float>(is, n);
    return Tensor<T>(h.shape, std::vector<T>(raw.begin(), raw.end()));
  }
  auto raw = detail::read_payload<double>(is, n);
  return Tensor<T>(h.shape, std::vector<T>(raw.begin(), raw.end()));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_tensor(os, t);
  if (!os) throw Error("write failed: " + path);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_tensor<T>(is);
}

}  // namespace dfq::io
