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
#include <cstdint>
#include <fstream>
#include <string>

#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/numerics/tensor_io.hpp"

// Checkpoint: "DFQC" | version u8 | spec hash u64 | seed u64 | frozen u8 |
// (weight, bias) tensor pair per block in the DFQT format.
namespace dfq::model {

inline constexpr std::array<char, 4> kCheckpointMagic = {'D', 'F', 'Q', 'C'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  bool frozen = false;
};

template <typename T>
void write_checkpoint(std::ostream& os, const ModelSpec& spec, const ModelParams<T>& p,
                      std::uint64_t seed) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  io::write_pod<std::uint8_t>(os, kCheckpointVersion);
  io::write_pod<std::uint64_t>(os, spec_hash(spec));
  io::write_pod<std::uint64_t>(os, seed);
  io::write_pod<std::uint8_t>(os, p.frozen ? 1 : 0);
  for (const auto& l : p.layers) {
    io::write_tensor(os, l.weight);
    io::write_tensor(os, l.bias);
  }
}

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw ParseError("bad checkpoint magic");
  const auto version = io::read_pod<std::uint8_t>(is);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  CheckpointHeader h;
  h.spec_hash = io::read_pod<std::uint64_t>(is);
  h.seed = io::read_pod<std::uint64_t>(is);
  h.frozen = io::read_pod<std::uint8_t>(is) != 0;
  return h;
}

// Reads parameters for `spec`; a header written for another spec is rejected.
template <typename T>
ModelParams<T> read_checkpoint(std::istream& is, const ModelSpec& spec,
                               CheckpointHeader* header = nullptr) {
  const auto h = read_checkpoint_header(is);
  if (h.spec_hash != spec_hash(spec))
    throw DataError("checkpoint was written for a different model spec");
  ModelParams<T> p = zero_params<T>(spec);
  for (auto& l : p.layers) {
    auto w = io::read_tensor<T>(is);
    auto b = io::read_tensor<T>(is);
    if (w.shape() != l.weight.shape() || b.shape() != l.bias.shape())
      throw DataError("checkpoint tensor shape does not match the model spec");
    l.weight = std::move(w);
    l.bias = std::move(b);
  }
  p.frozen = h.frozen;
  if (!p.all_finite()) throw DataError("checkpoint contains non-finite parameters");
  if (header) *header = h;
  return p;
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelSpec& spec, const ModelParams<T>& p,
                     std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_checkpoint(os, spec, p, seed);
  if (!os) throw Error("write failed: " + path);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path, const ModelSpec& spec,
                               CheckpointHeader* header = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint<T>(is, spec, header);
}

}  // namespace dfq::model
