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
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/error.hpp"
#include "dfqlab/model/layers.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/tensor.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::model {

inline constexpr std::size_t kNumBlocks = 4;
// Index of the block whose output is the penultimate feature vector.
inline constexpr std::size_t kFeatureBlock = 2;

// Two conv3x3+ReLU+pool blocks, a linear+ReLU penultimate layer of width
// d_feat, and a linear classifier.
struct ModelSpec {
  std::size_t in_channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t d_feat = 16;
  std::size_t num_classes = 10;
  std::uint64_t init_seed = 0;
  // Pixels are shifted by this constant before the first convolution.
  double input_offset = 0.5;

  std::array<BlockShape, kNumBlocks> blocks() const {
    return {{
        {BlockKind::kConvReluPool, in_channels, height, width, conv1},
        {BlockKind::kConvReluPool, conv1, height / 2, width / 2, conv2},
        {BlockKind::kLinearRelu, conv2 * (height / 4) * (width / 4), 1, 1, d_feat},
        {BlockKind::kLinear, d_feat, 1, 1, num_classes},
    }};
  }
  std::size_t input_size() const noexcept { return in_channels * height * width; }
};

inline void validate(const ModelSpec& s) {
  if (s.height % 4 != 0 || s.width % 4 != 0)
    throw ConfigError("model input height/width must be multiples of 4");
  if (!s.in_channels || !s.conv1 || !s.conv2 || !s.d_feat || s.num_classes < 2)
    throw ConfigError("model widths must be positive and num_classes >= 2");
}

inline nlohmann::ordered_json to_json(const ModelSpec& s) {
  nlohmann::ordered_json j;
  j["in_channels"] = s.in_channels;
  j["height"] = s.height;
  j["width"] = s.width;
  j["conv1"] = s.conv1;
  j["conv2"] = s.conv2;
  j["d_feat"] = s.d_feat;
  j["num_classes"] = s.num_classes;
  j["init_seed"] = s.init_seed;
  j["input_offset"] = s.input_offset;
  return j;
}

inline std::uint64_t spec_hash(const ModelSpec& s) { return world::fnv1a64(to_json(s).dump()); }

template <typename T>
struct LayerParams {
  Tensor<T> weight;  // [out][fan_in]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct ModelParams {
  std::array<LayerParams<T>, kNumBlocks> layers;
  bool frozen = false;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (std::size_t i = 0; i < kNumBlocks; ++i)
      out.layers[i] = {layers[i].weight.template cast<U>(), layers[i].bias.template cast<U>()};
    out.frozen = frozen;
    return out;
  }
  bool all_finite() const {
    return std::all_of(layers.begin(), layers.end(), [](const auto& l) {
      return l.weight.all_finite() && l.bias.all_finite();
    });
  }
  bool operator==(const ModelParams&) const = default;
};

template <typename T>
ModelParams<T> zero_params(const ModelSpec& spec) {
  ModelParams<T> p;
  const auto blocks = spec.blocks();
  for (std::size_t i = 0; i < kNumBlocks; ++i)
    p.layers[i] = {Tensor<T>({blocks[i].out_channels, blocks[i].fan_in()}),
                   Tensor<T>({blocks[i].out_channels})};
  return p;
}

// He-normal weights, zero biases.
template <typename T>
ModelParams<T> init_params(const ModelSpec& spec) {
  validate(spec);
  ModelParams<T> p = zero_params<T>(spec);
  const RngStream root(spec.init_seed, 0x696e6974ull);
  const auto blocks = spec.blocks();
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    RngStream rng = root.derive(i);
    const double sd = std::sqrt(2.0 / static_cast<double>(blocks[i].fan_in()));
    for (auto& w : p.layers[i].weight.vec()) w = static_cast<T>(sd * rng.normal());
  }
  return p;
}

template <typename T>
struct ForwardPass {
  Tensor<T> logits;  // n x K
  std::vector<std::array<BlockCache<T>, kNumBlocks>> caches;
};

inline void check_batch(const ModelSpec& spec, const Shape& shape) {
  const bool ok = shape.size() == 4 && shape[0] > 0 && shape[1] == spec.in_channels &&
                  shape[2] == spec.height && shape[3] == spec.width;
  if (!ok)
    throw PreconditionError("batch shape " + shape_str(shape) + " does not match model input [n x " +
                            std::to_string(spec.in_channels) + " x " + std::to_string(spec.height) +
                            " x " + std::to_string(spec.width) + "]");
}

// Runs blocks [first, last) on one sample.
template <typename T>
std::vector<T> run_blocks(const ModelSpec& spec, const ModelParams<T>& p, std::span<const T> x,
                          std::size_t first, std::size_t last,
                          std::array<BlockCache<T>, kNumBlocks>* caches = nullptr) {
  const auto blocks = spec.blocks();
  std::vector<T> cur(x.begin(), x.end()), next;
  if (first == 0)
    for (auto& v : cur) v -= static_cast<T>(spec.input_offset);
  for (std::size_t b = first; b < last; ++b) {
    next.assign(blocks[b].output_size(), T{0});
    block_forward<T>(blocks[b], p.layers[b].weight.span(), p.layers[b].bias.span(), cur, next,
                     caches ? &(*caches)[b] : nullptr);
    cur.swap(next);
  }
  return cur;
}

template <typename T, typename U>
ForwardPass<T> forward(const ModelSpec& spec, const ModelParams<T>& p, const Tensor<U>& batch,
                       bool keep_cache = true) {
  check_batch(spec, batch.shape());
  const std::size_t n = batch.dim(0);
  ForwardPass<T> out{Tensor<T>({n, spec.num_classes}), {}};
  if (keep_cache) out.caches.resize(n);
  std::vector<T> x(spec.input_size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = batch.row(i);
    std::transform(row.begin(), row.end(), x.begin(), [](U v) { return static_cast<T>(v); });
    const auto logits =
        run_blocks<T>(spec, p, x, 0, kNumBlocks, keep_cache ? &out.caches[i] : nullptr);
    std::copy(logits.begin(), logits.end(), out.logits.row(i).begin());
  }
  return out;
}

// Gradients of sum_i dlogits[i] . logits[i] w.r.t. every parameter.
template <typename T>
ModelParams<T> backward(const ModelSpec& spec, const ModelParams<T>& p, const ForwardPass<T>& pass,
                        const Tensor<T>& dlogits) {
  require(!pass.caches.empty(), "backward: forward pass was run without a cache");
  require(dlogits.shape() == pass.logits.shape(), "backward: gradient shape mismatch");
  const auto blocks = spec.blocks();
  ModelParams<T> g = zero_params<T>(spec);
  std::vector<T> dcur, dprev;
  for (std::size_t i = 0; i < pass.caches.size(); ++i) {
    const auto row = dlogits.row(i);
    dcur.assign(row.begin(), row.end());
    for (std::size_t b = kNumBlocks; b-- > 0;) {
      dprev.assign(b > 0 ? blocks[b].input_size() : 0, T{0});
      block_backward<T>(blocks[b], p.layers[b].weight.span(), pass.caches[i][b], dcur, dprev,
                        g.layers[b].weight.span(), g.layers[b].bias.span());
      dcur.swap(dprev);
    }
  }
  return g;
}

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // d value / d logits
};

// Mean over samples of -sum_k y_k log softmax(z)_k, times `scale`.
template <typename T, typename U>
LossResult<T> cross_entropy(const Tensor<T>& logits, const Tensor<U>& targets, double scale = 1.0) {
  require(logits.shape() == targets.shape(), "cross_entropy: shape mismatch");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  std::vector<double> prob(k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits(i, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += (prob[c] = std::exp(logits(i, c) - mx));
    const double logz = std::log(z) + mx;
    for (std::size_t c = 0; c < k; ++c) {
      prob[c] /= z;
      const double y = static_cast<double>(targets(i, c));
      if (y != 0.0) r.value -= y * (static_cast<double>(logits(i, c)) - logz);
      r.grad(i, c) = static_cast<T>(scale * (prob[c] - y) / static_cast<double>(n));
    }
  }
  r.value *= scale / static_cast<double>(n);
  return r;
}

// Per-sample cross-entropy values (unscaled).
template <typename T, typename U>
std::vector<double> cross_entropy_per_sample(const Tensor<T>& logits, const Tensor<U>& targets) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits(i, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits(i, c) - mx);
    const double logz = std::log(z) + mx;
    for (std::size_t c = 0; c < k; ++c) {
      const double y = static_cast<double>(targets(i, c));
      if (y != 0.0) out[i] -= y * (static_cast<double>(logits(i, c)) - logz);
    }
  }
  return out;
}

// Mean over samples of ||z - y||^2, times `scale`.
template <typename T, typename U>
LossResult<T> mse(const Tensor<T>& logits, const Tensor<U>& targets, double scale = 1.0) {
  require(logits.shape() == targets.shape(), "mse: shape mismatch");
  const std::size_t n = logits.dim(0);
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double d = static_cast<double>(logits[i]) - static_cast<double>(targets[i]);
    r.value += d * d;
    r.grad[i] = static_cast<T>(scale * 2.0 * d / static_cast<double>(n));
  }
  r.value *= scale / static_cast<double>(n);
  return r;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// Penultimate activations (after ReLU, before the classifier): n x d_feat.
template <typename T, typename U>
Tensor<T> extract_features(const ModelSpec& spec, const ModelParams<T>& p, const Tensor<U>& batch) {
  check_batch(spec, batch.shape());
  const std::size_t n = batch.dim(0);
  Tensor<T> out({n, spec.d_feat});
  std::vector<T> x(spec.input_size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = batch.row(i);
    std::transform(row.begin(), row.end(), x.begin(), [](U v) { return static_cast<T>(v); });
    const auto f = run_blocks<T>(spec, p, x, 0, kFeatureBlock + 1);
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

// Fraction of samples whose argmax logit equals the argmax of the label.
template <typename T>
double accuracy(const Tensor<T>& logits, const world::LabeledSet& set) {
  require(set.size() > 0, "accuracy: empty set");
  const auto pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == set.hard_label(i);
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace dfq::model
