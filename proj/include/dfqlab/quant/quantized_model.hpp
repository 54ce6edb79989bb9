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
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/checkpoint.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/tensor.hpp"
#include "dfqlab/numerics/tensor_io.hpp"
#include "dfqlab/quant/calibrate.hpp"
#include "dfqlab/quant/quantizer.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::quant {

using model::kNumBlocks;

// Frozen FP model plus one finalized weight and input-activation quantizer
// per block. Biases stay in full precision.
template <typename T>
struct QuantizedModel {
  model::ModelSpec spec;
  model::ModelParams<T> fp;
  std::array<WeightQuantizer, kNumBlocks> weights;
  std::array<ActQuantizer, kNumBlocks> acts;

  // Dequantized weights of every block.
  model::ModelParams<T> effective_params() const {
    model::ModelParams<T> p = fp;
    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      const auto w = weights[b].template weights<T>();
      std::copy(w.begin(), w.end(), p.layers[b].weight.vec().begin());
    }
    return p;
  }
};

// Hard-quantized forward over blocks [first, last) for one sample whose
// values are the raw (un-offset) block inputs.
template <typename T>
std::vector<T> run_quantized_blocks(const QuantizedModel<T>& qm,
                                    const model::ModelParams<T>& effective, std::span<const T> x,
                                    std::size_t first, std::size_t last) {
  const auto blocks = qm.spec.blocks();
  std::vector<T> cur(x.begin(), x.end()), next;
  for (std::size_t b = first; b < last; ++b) {
    for (auto& v : cur) v = qm.acts[b].apply(v);
    if (b == 0)
      for (auto& v : cur) v -= static_cast<T>(qm.spec.input_offset);
    next.assign(blocks[b].output_size(), T{0});
    model::block_forward<T>(blocks[b], effective.layers[b].weight.span(),
                            effective.layers[b].bias.span(), cur, next, nullptr);
    cur.swap(next);
  }
  return cur;
}

template <typename T, typename U>
Tensor<T> quantized_logits(const QuantizedModel<T>& qm, const Tensor<U>& batch) {
  model::check_batch(qm.spec, batch.shape());
  const auto eff = qm.effective_params();
  const std::size_t n = batch.dim(0);
  Tensor<T> out({n, qm.spec.num_classes});
  std::vector<T> x(qm.spec.input_size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = batch.row(i);
    std::transform(row.begin(), row.end(), x.begin(), [](U v) { return static_cast<T>(v); });
    const auto z = run_quantized_blocks<T>(qm, eff, x, 0, kNumBlocks);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

// Top-1 accuracy of the quantized model against the argmax label.
template <typename T>
double eval_quantized(const QuantizedModel<T>& qm, const world::LabeledSet& test) {
  if (test.size() == 0) throw PreconditionError("eval_quantized: empty test set");
  return model::accuracy(quantized_logits(qm, test.images), test);
}

template <typename T>
struct QuantizeResult {
  QuantizedModel<T> model;
  std::array<GradTrace, kNumBlocks> traces;
  std::array<BlockReport, kNumBlocks> reports;
};

// Calibrates blocks in order. Block b sees the hard-quantized outputs of
// blocks < b as inputs and the FP model's own activations as targets.
template <typename T>
QuantizeResult<T> quantize_model(const model::ModelSpec& spec, const model::ModelParams<T>& fp,
                                 const Tensor<float>& calibration, const QuantConfig& cfg,
                                 const RngStream& rng) {
  validate(cfg);
  model::check_batch(spec, calibration.shape());
  if (!fp.all_finite()) throw PreconditionError("quantize_model: non-finite FP parameters");
  const auto blocks = spec.blocks();
  const std::size_t n = calibration.dim(0);

  QuantizeResult<T> res;
  res.model.spec = spec;
  res.model.fp = fp;
  res.model.fp.frozen = true;

  Tensor<T> q_in({n, spec.input_size()});
  for (std::size_t i = 0; i < q_in.size(); ++i) q_in[i] = static_cast<T>(calibration[i]);
  Tensor<T> fp_in = q_in;

  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const auto& shape = blocks[b];
    const auto& layer = fp.layers[b];
    const T offset = b == 0 ? static_cast<T>(spec.input_offset) : T{0};

    BlockProblem<T> prob{shape, layer.bias.span(), static_cast<double>(offset), q_in,
                         Tensor<T>({n, shape.output_size()})};
    std::vector<T> x(shape.input_size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = fp_in.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = src[j] - offset;
      model::block_forward<T>(shape, layer.weight.span(), layer.bias.span(), x,
                              prob.targets.row(i), nullptr);
    }

    WeightQuantizer wq =
        init_weight_quantizer<T>(layer.weight.span(), shape.out_channels, cfg.weight_bits);
    ActQuantizer aq;
    if (cfg.quantize_activations) {
      aq = init_act_quantizer<T>(q_in.span(), cfg.act_bits);
    } else {
      aq.enabled = false;
    }

    auto cal = calibrate_block(prob, std::move(wq), aq, cfg, rng.derive(b));
    res.model.weights[b] = std::move(cal.weights);
    res.model.acts[b] = cal.act;
    res.traces[b] = std::move(cal.trace);
    res.traces[b].block = b;
    res.reports[b] = cal.report;

    // Propagate both paths to the next block.
    const auto qw = res.model.weights[b].template weights<T>();
    Tensor<T> q_next({n, shape.output_size()});
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = q_in.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = res.model.acts[b].apply(src[j]) - offset;
      model::block_forward<T>(shape, qw, layer.bias.span(), x, q_next.row(i), nullptr);
    }
    q_in = std::move(q_next);
    fp_in = std::move(prob.targets);
  }
  return res;
}

// Quantized checkpoint: the FP checkpoint followed by one section per block:
//   weight bits u8 | channels u32 | fan_in u32 | scale (f64) | base (f64) |
//   rounding bits (f64, 0/1) | act enabled u8 | act bits u8 | act scale f64 |
//   zero point f64
template <typename T>
void write_quantized(std::ostream& os, const QuantizedModel<T>& qm, std::uint64_t seed) {
  model::write_checkpoint(os, qm.spec, qm.fp, seed);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const auto& w = qm.weights[b];
    require(w.hard, "write_quantized: weight quantizer is not finalized");
    io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(w.bits));
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.channels));
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.fan_in));
    io::write_tensor(os, TensorD({w.channels}, w.scale));
    io::write_tensor(os, TensorD({w.base.size()}, w.base));
    std::vector<double> up(w.v.size());
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = w.offset(i);
    io::write_tensor(os, TensorD({up.size()}, up));
    const auto& a = qm.acts[b];
    io::write_pod<std::uint8_t>(os, a.enabled ? 1 : 0);
    io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a.bits));
    io::write_pod<double>(os, a.scale);
    io::write_pod<double>(os, a.zero_point);
  }
}

template <typename T>
QuantizedModel<T> read_quantized(std::istream& is, const model::ModelSpec& spec) {
  QuantizedModel<T> qm;
  qm.spec = spec;
  qm.fp = model::read_checkpoint<T>(is, spec);
  const auto blocks = spec.blocks();
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    auto& w = qm.weights[b];
    w.bits = io::read_pod<std::uint8_t>(is);
    check_bits(w.bits);
    w.range = signed_range(w.bits);
    w.channels = io::read_pod<std::uint32_t>(is);
    w.fan_in = io::read_pod<std::uint32_t>(is);
    if (w.channels != blocks[b].out_channels || w.fan_in != blocks[b].fan_in())
      throw DataError("quantized checkpoint block shape does not match the model spec");
    w.scale = io::read_tensor<double>(is).vec();
    w.base = io::read_tensor<double>(is).vec();
    const auto up = io::read_tensor<double>(is).vec();
    if (w.scale.size() != w.channels || w.base.size() != blocks[b].weight_size() ||
        up.size() != w.base.size())
      throw DataError("quantized checkpoint tensor sizes are inconsistent");
    w.v.resize(up.size());
    for (std::size_t i = 0; i < up.size(); ++i) w.v[i] = up[i] >= 0.5 ? 4.0 : -4.0;
    w.hard = true;
    auto& a = qm.acts[b];
    a.enabled = io::read_pod<std::uint8_t>(is) != 0;
    a.bits = io::read_pod<std::uint8_t>(is);
    check_bits(a.bits);
    a.range = unsigned_range(a.bits);
    a.scale = io::read_pod<double>(is);
    a.zero_point = io::read_pod<double>(is);
    if (!(a.scale > 0.0)) throw DataError("quantized checkpoint has a non-positive scale");
  }
  return qm;
}

template <typename T>
void save_quantized(const std::string& path, const QuantizedModel<T>& qm, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_quantized(os, qm, seed);
  if (!os) throw Error("write failed: " + path);
}

template <typename T>
QuantizedModel<T> load_quantized(const std::string& path, const model::ModelSpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_quantized<T>(is, spec);
}

}  // namespace dfq::quant
