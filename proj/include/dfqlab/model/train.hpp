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

#include <cmath>
#include <numbers>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::model {

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  std::vector<EpochLog> log;
  double test_accuracy = 0.0;
};

template <typename T>
Tensor<T> gather_rows(const TensorF& src, const std::vector<std::size_t>& idx,
                      std::size_t begin, std::size_t end) {
  Shape shape = src.shape();
  shape[0] = end - begin;
  Tensor<T> out(shape);
  for (std::size_t i = begin; i < end; ++i) {
    const auto row = src.row(idx[i]);
    std::copy(row.begin(), row.end(), out.row(i - begin).begin());
  }
  return out;
}

template <typename T>
Tensor<T> predict(const ModelSpec& spec, const ModelParams<T>& p, const TensorF& images) {
  return forward<T>(spec, p, images, /*keep_cache=*/false).logits;
}

// SGD with momentum and cosine step-size decay on cross-entropy. Single
// threaded; batches are reduced in sample order.
template <typename T>
TrainResult<T> train_reference(const ModelSpec& spec, const world::LabeledSet& train,
                               const world::LabeledSet& test, const TrainConfig& cfg,
                               const RngStream& rng) {
  validate(spec);
  require(train.size() > 0, "train_reference: empty training set");
  require(train.num_classes() == spec.num_classes, "train_reference: class count mismatch");
  TrainResult<T> result{init_params<T>(spec), {}, 0.0};
  auto& p = result.params;
  ModelParams<T> velocity = zero_params<T>(spec);

  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream erng = rng.derive(epoch);
    const auto order = erng.permutation(n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size, ++step) {
      const std::size_t e = std::min(n, b + cfg.batch_size);
      const auto x = gather_rows<float>(train.images, order, b, e);
      const auto y = gather_rows<float>(train.soft_labels, order, b, e);
      const auto pass = forward<T>(spec, p, x);
      const auto loss = cross_entropy(pass.logits, y);
      if (!std::isfinite(loss.value))
        throw NumericError("training diverged (non-finite loss)", static_cast<long>(step));
      loss_sum += loss.value * static_cast<double>(e - b);
      const auto pred = argmax_rows(pass.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto row = y.row(i);
        correct += pred[i] == std::max_element(row.begin(), row.end()) - row.begin();
      }
      const auto g = backward(spec, p, pass, loss.grad);

      const double lr = cfg.learning_rate * 0.5 *
                        (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                        static_cast<double>(total_steps)));
      for (std::size_t l = 0; l < kNumBlocks; ++l) {
        auto update = [&](Tensor<T>& w, const Tensor<T>& gw, Tensor<T>& v, bool decay) {
          for (std::size_t i = 0; i < w.size(); ++i) {
            const double grad = static_cast<double>(gw[i]) +
                                (decay ? cfg.weight_decay * static_cast<double>(w[i]) : 0.0);
            v[i] = static_cast<T>(cfg.momentum * static_cast<double>(v[i]) + grad);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * static_cast<double>(v[i]));
          }
        };
        update(p.layers[l].weight, g.layers[l].weight, velocity.layers[l].weight, true);
        update(p.layers[l].bias, g.layers[l].bias, velocity.layers[l].bias, false);
      }
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(n),
                          static_cast<double>(correct) / static_cast<double>(n)});
  }
  if (!p.all_finite()) throw NumericError("training produced non-finite parameters",
                                          static_cast<long>(step));
  if (test.size() > 0) result.test_accuracy = accuracy(predict(spec, p, test.images), test);
  result.params.frozen = true;
  return result;
}

}  // namespace dfq::model
