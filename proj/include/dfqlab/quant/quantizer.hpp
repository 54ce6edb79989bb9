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
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dfqlab/error.hpp"

namespace dfq::quant {

// Uniform fake quantization: s * (clamp(round(x / s) + z, qmin, qmax) - z),
// rounding half up.
template <typename T>
T quantize_dequantize(T x, double scale, double zero_point, double qmin, double qmax) {
  if (!(scale > 0.0)) throw PreconditionError("quantizer scale must be positive");
  const double q = std::floor(static_cast<double>(x) / scale + 0.5) + zero_point;
  return static_cast<T>(scale * (std::clamp(q, qmin, qmax) - zero_point));
}

// Signed symmetric integer range for `bits`: [-2^(b-1), 2^(b-1) - 1].
struct IntRange {
  double qmin = 0.0;
  double qmax = 0.0;
};

inline IntRange signed_range(int bits) {
  return {-std::ldexp(1.0, bits - 1), std::ldexp(1.0, bits - 1) - 1.0};
}
inline IntRange unsigned_range(int bits) { return {0.0, std::ldexp(1.0, bits) - 1.0}; }

inline void check_bits(int bits) {
  if (bits < 2 || bits > 8)
    throw ConfigError("bit-width must be in [2, 8], got " + std::to_string(bits));
}

// Rectified sigmoid used for learnable rounding offsets.
inline constexpr double kStretchZeta = 1.1;
inline constexpr double kStretchGamma = -0.1;
inline constexpr double kScaleFloor = 1e-8;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// h(V) = clamp(sigmoid(V) (zeta - gamma) + gamma, 0, 1)
inline double rectified_sigmoid(double v) {
  return std::clamp(sigmoid(v) * (kStretchZeta - kStretchGamma) + kStretchGamma, 0.0, 1.0);
}

inline double rectified_sigmoid_grad(double v) {
  const double s = sigmoid(v);
  const double u = s * (kStretchZeta - kStretchGamma) + kStretchGamma;
  return (u > 0.0 && u < 1.0) ? s * (1.0 - s) * (kStretchZeta - kStretchGamma) : 0.0;
}

// V whose rectified sigmoid equals `rest` in [0, 1). A zero rest is placed
// inside the saturated region so the offset starts at exactly 0 with zero
// gradient.
inline double inverse_rectified_sigmoid(double rest) {
  if (rest <= 0.0) return -4.0;
  const double p = (rest - kStretchGamma) / (kStretchZeta - kStretchGamma);
  return std::log(p / (1.0 - p));
}

// Per-output-channel symmetric weight quantizer with learnable rounding.
// The integer base floor(w / s0) is fixed at initialization; the learnable
// parts are the channel scales and the rounding variables V.
struct WeightQuantizer {
  int bits = 8;
  IntRange range;
  std::size_t channels = 0;
  std::size_t fan_in = 0;
  std::vector<double> scale;  // per channel
  std::vector<double> base;   // floor(w / s0), one per weight
  std::vector<double> v;      // rounding variables, one per weight
  bool hard = false;          // offsets thresholded to {0, 1}

  double offset(std::size_t i) const {
    return hard ? (v[i] >= 0.0 ? 1.0 : 0.0) : rectified_sigmoid(v[i]);
  }
  double integer(std::size_t i) const {
    return std::clamp(base[i] + offset(i), range.qmin, range.qmax);
  }
  double dequantized(std::size_t i) const { return scale[i / fan_in] * integer(i); }

  template <typename T>
  std::vector<T> weights() const {
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(dequantized(i));
    return out;
  }

  // Threshold every offset to {0, 1}.
  void finalize() {
    hard = true;
    for (auto& x : v) x = x >= 0.0 ? 4.0 : -4.0;
  }
};

// Per-tensor activation quantizer with a learnable scale (straight-through
// rounding). Non-negative inputs use [0, 2^b - 1] with zero point 0; signed
// inputs put the zero point at 2^(b-1).
struct ActQuantizer {
  bool enabled = true;
  int bits = 8;
  IntRange range;
  double scale = 1.0;
  double zero_point = 0.0;

  template <typename T>
  T apply(T x) const {
    return enabled ? quantize_dequantize(x, scale, zero_point, range.qmin, range.qmax) : x;
  }

  // d apply(x) / d scale under the straight-through rule.
  double scale_grad(double x) const {
    const double r = x / scale;
    const double q = std::floor(r + 0.5) + zero_point;
    if (q < range.qmin) return range.qmin - zero_point;
    if (q > range.qmax) return range.qmax - zero_point;
    return std::floor(r + 0.5) - r;
  }
};

// Picks each channel's scale from a 100-point grid of factors 0.4, 0.408,
// ..., 1.192 times max|w| / qmax, minimizing squared quantization error.
// All-zero channels get the scale floor. V starts at the fractional part of
// w / s so that thresholding reproduces nearest rounding.
template <typename T>
WeightQuantizer init_weight_quantizer(std::span<const T> weights, std::size_t channels, int bits) {
  check_bits(bits);
  require(channels > 0 && weights.size() % channels == 0,
          "init_weight_quantizer: weights not divisible into channels");
  WeightQuantizer q;
  q.bits = bits;
  q.range = signed_range(bits);
  q.channels = channels;
  q.fan_in = weights.size() / channels;
  q.scale.assign(channels, kScaleFloor);
  q.base.resize(weights.size());
  q.v.resize(weights.size());

  for (std::size_t c = 0; c < channels; ++c) {
    const auto w = weights.subspan(c * q.fan_in, q.fan_in);
    double mx = 0.0;
    for (T x : w) mx = std::max(mx, std::abs(static_cast<double>(x)));
    if (mx > 0.0) {
      double best = INFINITY;
      for (int i = 0; i < 100; ++i) {
        const double s = (400.0 + 8.0 * i) / 1000.0 * mx / q.range.qmax;
        double err = 0.0;
        for (T x : w) {
          const double d = static_cast<double>(x) -
                           quantize_dequantize(static_cast<double>(x), s, 0.0, q.range.qmin,
                                               q.range.qmax);
          err += d * d;
        }
        if (err < best) {
          best = err;
          q.scale[c] = s;
        }
      }
    }
    for (std::size_t j = 0; j < q.fan_in; ++j) {
      const double r = static_cast<double>(w[j]) / q.scale[c];
      const double fl = std::floor(r);
      q.base[c * q.fan_in + j] = fl;
      q.v[c * q.fan_in + j] = inverse_rectified_sigmoid(r - fl);
    }
  }
  return q;
}

// Scale from the 99.9th percentile of |a| over the calibration inputs.
template <typename T>
ActQuantizer init_act_quantizer(std::span<const T> activations, int bits) {
  check_bits(bits);
  require(!activations.empty(), "init_act_quantizer: no calibration activations");
  ActQuantizer q;
  q.bits = bits;
  std::vector<double> mag(activations.size());
  double mn = INFINITY;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    mag[i] = std::abs(static_cast<double>(activations[i]));
    mn = std::min(mn, static_cast<double>(activations[i]));
  }
  const auto k = static_cast<std::size_t>(
      std::ceil(0.999 * static_cast<double>(mag.size()))) - 1;
  std::nth_element(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(k), mag.end());
  const double p = mag[k];
  q.range = unsigned_range(bits);
  if (mn >= 0.0) {
    q.zero_point = 0.0;
    q.scale = p / q.range.qmax;
  } else {
    q.zero_point = std::ldexp(1.0, bits - 1);
    q.scale = p / (q.zero_point - 1.0);
  }
  q.scale = std::max(q.scale, kScaleFloor);
  return q;
}

struct SoftRoundResult {
  std::vector<double> weights;
  double regularizer = 0.0;
};

// Dequantized soft-rounded weights and the rounding regularizer
// sum(1 - |2 h(V) - 1|^beta).
inline SoftRoundResult soft_round(const WeightQuantizer& q, double beta) {
  require(beta > 0.0, "soft_round: beta must be positive");
  SoftRoundResult r;
  r.weights.resize(q.v.size());
  for (std::size_t i = 0; i < q.v.size(); ++i) {
    r.weights[i] = q.dequantized(i);
    r.regularizer += 1.0 - std::pow(std::abs(2.0 * q.offset(i) - 1.0), beta);
  }
  return r;
}

}  // namespace dfq::quant
