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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfqlab/error.hpp"

// Per-sample kernels for the three block types of the desk network:
// conv3x3(same) + ReLU + maxpool2, linear + ReLU, and a plain linear layer.
// Layouts are row-major: feature maps [C][H][W], conv weights
// [Cout][Cin][3][3], linear weights [out][in].
namespace dfq::model {

enum class BlockKind { kConvReluPool, kLinearRelu, kLinear };

struct BlockShape {
  BlockKind kind = BlockKind::kLinear;
  std::size_t in_channels = 0;  // conv: input channels; linear: input features
  std::size_t height = 1;       // conv input spatial size
  std::size_t width = 1;
  std::size_t out_channels = 0;  // conv: output channels; linear: output features

  bool is_conv() const noexcept { return kind == BlockKind::kConvReluPool; }
  std::size_t input_size() const noexcept { return in_channels * height * width; }
  std::size_t pre_size() const noexcept {
    return is_conv() ? out_channels * height * width : out_channels;
  }
  std::size_t output_size() const noexcept {
    return is_conv() ? out_channels * (height / 2) * (width / 2) : out_channels;
  }
  std::size_t weight_size() const noexcept {
    return is_conv() ? out_channels * in_channels * 9 : out_channels * in_channels;
  }
  // Weights feeding one output channel / unit.
  std::size_t fan_in() const noexcept { return is_conv() ? in_channels * 9 : in_channels; }
};

// What backward needs from forward for one sample.
template <typename T>
struct BlockCache {
  std::vector<T> input;
  std::vector<T> pre;                 // pre-activation
  std::vector<std::uint32_t> argmax;  // pool winners (conv blocks)
};

namespace kernels {

template <typename T>
void conv3x3_forward(std::span<const T> in, std::span<const T> w, std::span<const T> b,
                     std::span<T> out, std::size_t cin, std::size_t cout, std::size_t h,
                     std::size_t wd) {
  const std::size_t hw = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    T* o = out.data() + co * hw;
    std::fill(o, o + hw, b[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* src = in.data() + ci * hw;
      const T* kern = w.data() + (co * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y_lo = dy < 0 ? 1 : 0;
        const std::size_t y_hi = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const T wv = kern[ky * 3 + kx];
          const std::size_t x_lo = dx < 0 ? 1 : 0;
          const std::size_t x_hi = dx > 0 ? wd - 1 : wd;
          const std::size_t len = x_hi - x_lo;
          for (std::size_t y = y_lo; y < y_hi; ++y) {
            T* orow = o + y * wd + x_lo;
            const T* irow = src + (y + dy) * wd + (x_lo + dx);
            for (std::size_t x = 0; x < len; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (when din is non-empty) dIn.
template <typename T>
void conv3x3_backward(std::span<const T> in, std::span<const T> w, std::span<const T> dpre,
                      std::span<T> din, std::span<T> dw, std::span<T> db, std::size_t cin,
                      std::size_t cout, std::size_t h, std::size_t wd) {
  const std::size_t hw = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    const T* g = dpre.data() + co * hw;
    T bsum = 0;
    for (std::size_t p = 0; p < hw; ++p) bsum += g[p];
    db[co] += bsum;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* src = in.data() + ci * hw;
      T* dsrc = din.empty() ? nullptr : din.data() + ci * hw;
      const T* kern = w.data() + (co * cin + ci) * 9;
      T* dkern = dw.data() + (co * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y_lo = dy < 0 ? 1 : 0;
        const std::size_t y_hi = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const T wv = kern[ky * 3 + kx];
          const std::size_t x_lo = dx < 0 ? 1 : 0;
          const std::size_t x_hi = dx > 0 ? wd - 1 : wd;
          const std::size_t len = x_hi - x_lo;
          T acc = 0;
          for (std::size_t y = y_lo; y < y_hi; ++y) {
            const T* grow = g + y * wd + x_lo;
            const T* irow = src + (y + dy) * wd + (x_lo + dx);
            for (std::size_t x = 0; x < len; ++x) acc += grow[x] * irow[x];
            if (dsrc) {
              T* drow = dsrc + (y + dy) * wd + (x_lo + dx);
              for (std::size_t x = 0; x < len; ++x) drow[x] += wv * grow[x];
            }
          }
          dkern[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
void linear_forward(std::span<const T> in, std::span<const T> w, std::span<const T> b,
                    std::span<T> out, std::size_t nin, std::size_t nout) {
  for (std::size_t o = 0; o < nout; ++o) {
    const T* row = w.data() + o * nin;
    T acc = 0;
    for (std::size_t i = 0; i < nin; ++i) acc += row[i] * in[i];
    out[o] = acc + b[o];
  }
}

template <typename T>
void linear_backward(std::span<const T> in, std::span<const T> w, std::span<const T> dout,
                     std::span<T> din, std::span<T> dw, std::span<T> db, std::size_t nin,
                     std::size_t nout) {
  for (std::size_t o = 0; o < nout; ++o) {
    const T g = dout[o];
    db[o] += g;
    if (g == T{0}) continue;
    T* drow = dw.data() + o * nin;
    for (std::size_t i = 0; i < nin; ++i) drow[i] += g * in[i];
    if (!din.empty()) {
      const T* row = w.data() + o * nin;
      for (std::size_t i = 0; i < nin; ++i) din[i] += g * row[i];
    }
  }
}

}  // namespace kernels

// Forward one sample through a block. `cache` may be null when no backward
// pass will follow.
template <typename T>
void block_forward(const BlockShape& s, std::span<const T> w, std::span<const T> b,
                   std::span<const T> in, std::span<T> out, BlockCache<T>* cache) {
  std::vector<T> local;
  std::vector<T>& pre = cache ? cache->pre : local;
  pre.resize(s.pre_size());
  if (cache) cache->input.assign(in.begin(), in.end());

  if (s.kind == BlockKind::kConvReluPool) {
    kernels::conv3x3_forward<T>(in, w, b, pre, s.in_channels, s.out_channels, s.height,
                                s.width);
    const std::size_t oh = s.height / 2, ow = s.width / 2;
    if (cache) cache->argmax.resize(s.output_size());
    for (std::size_t c = 0; c < s.out_channels; ++c) {
      const T* plane = pre.data() + c * s.height * s.width;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          std::uint32_t best = static_cast<std::uint32_t>((2 * y) * s.width + 2 * x);
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::uint32_t>((2 * y + dy) * s.width + 2 * x + dx);
              if (plane[idx] > plane[best]) best = idx;
            }
          const std::size_t o = c * oh * ow + y * ow + x;
          out[o] = std::max(plane[best], T{0});
          if (cache) cache->argmax[o] = static_cast<std::uint32_t>(c * s.height * s.width) + best;
        }
    }
    return;
  }

  kernels::linear_forward<T>(in, w, b, pre, s.in_channels, s.out_channels);
  for (std::size_t o = 0; o < s.out_channels; ++o)
    out[o] = s.kind == BlockKind::kLinearRelu ? std::max(pre[o], T{0}) : pre[o];
}

// Backward one sample. Accumulates into dw/db; writes dIn when din is
// non-empty (din is overwritten, not accumulated).
template <typename T>
void block_backward(const BlockShape& s, std::span<const T> w, const BlockCache<T>& cache,
                    std::span<const T> dout, std::span<T> din, std::span<T> dw,
                    std::span<T> db) {
  std::vector<T> dpre(s.pre_size(), T{0});
  if (s.kind == BlockKind::kConvReluPool) {
    for (std::size_t o = 0; o < s.output_size(); ++o) {
      const auto idx = cache.argmax[o];
      if (cache.pre[idx] > T{0}) dpre[idx] += dout[o];
    }
  } else {
    for (std::size_t o = 0; o < s.out_channels; ++o)
      dpre[o] = (s.kind == BlockKind::kLinear || cache.pre[o] > T{0}) ? dout[o] : T{0};
  }
  if (!din.empty()) std::fill(din.begin(), din.end(), T{0});
  if (s.is_conv()) {
    kernels::conv3x3_backward<T>(cache.input, w, dpre, din, dw, db, s.in_channels,
                                 s.out_channels, s.height, s.width);
  } else {
    kernels::linear_backward<T>(cache.input, w, dpre, din, dw, db, s.in_channels,
                                s.out_channels);
  }
}

}  // namespace dfq::model
