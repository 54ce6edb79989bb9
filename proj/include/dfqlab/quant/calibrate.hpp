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
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/layers.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/tensor.hpp"
#include "dfqlab/quant/quantizer.hpp"
#include "dfqlab/quant/trace.hpp"

// Blockwise reconstruction: learns per-channel weight scales, rounding
// variables and the block's input activation scale by minimizing
// E||block_fp(x) - block_q(x)||^2 + lambda * sum(1 - |2h(V) - 1|^beta) with
// Adam, recording g(t) for every parameter group along the way.
namespace dfq::quant {

struct QuantConfig {
  int weight_bits = 2;
  int act_bits = 4;
  bool quantize_activations = true;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  double lr_rounding = 1e-2;
  double lr_weight_scale = 1e-3;
  double lr_act_scale = 1e-3;
  double reg_weight = 0.01;
  double beta_start = 20.0;
  double beta_end = 2.0;
  double warmup = 0.2;  // fraction of steps before the regularizer starts
  double sigma = 1.0;   // assumed SGD noise scale for the bound proxy
  bool learn_rounding = true;
  bool learn_weight_scale = true;
  bool learn_act_scale = true;
};

inline void validate(const QuantConfig& c) {
  check_bits(c.weight_bits);
  check_bits(c.act_bits);
  if (c.steps < 1) throw ConfigError("quant steps must be >= 1");
  if (c.batch_size < 1) throw ConfigError("quant batch_size must be >= 1");
  if (!(c.lr_rounding > 0.0 && c.lr_weight_scale > 0.0 && c.lr_act_scale > 0.0))
    throw ConfigError("quant step sizes must be positive");
  if (!(c.beta_start > 0.0 && c.beta_end > 0.0)) throw ConfigError("beta must be positive");
  if (!(c.warmup >= 0.0 && c.warmup < 1.0)) throw ConfigError("warmup must be in [0, 1)");
  if (!(c.sigma > 0.0)) throw ConfigError("sigma must be positive");
}

// Cosine-decayed step size at step t of T.
inline double cosine_step(double base, std::size_t t, std::size_t total) {
  return base * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

// Reconstruction problem for one block: quantized-path inputs and the
// full-precision targets they should reproduce.
template <typename T>
struct BlockProblem {
  model::BlockShape shape;
  std::span<const T> bias;
  double input_offset = 0.0;  // subtracted after activation quantization
  Tensor<T> inputs;           // N x input_size
  Tensor<T> targets;          // N x output_size

  std::size_t size() const { return inputs.dim(0); }
};

// Learnable scales are optimized as multipliers of their initial values,
// s = s0 * alpha, so one step size suits every channel regardless of the
// weight or activation range. Gradients and norms are taken w.r.t. alpha.
struct ScaleReference {
  std::vector<double> weight;  // s0 per output channel
  double act = 1.0;
};

struct BlockGradients {
  std::vector<double> v;
  std::vector<double> weight_scale;  // w.r.t. the per-channel multiplier
  double act_scale = 0.0;            // w.r.t. the activation multiplier
};

struct BlockEval {
  double recon = 0.0;       // mean per-sample squared reconstruction error
  double regularizer = 0.0;
  double total = 0.0;
  BlockGradients grad;      // of `total`
  std::array<double, kNumGroups> grad_sq{};  // mean per-sample squared norms, data term
};

// Loss (and optionally gradients) of the block objective on the samples in
// `idx`, at the quantizer state (wq, aq). Without `ref` the scale gradients
// are w.r.t. the scales themselves (unit reference).
template <typename T>
BlockEval evaluate_block(const BlockProblem<T>& prob, const WeightQuantizer& wq,
                         const ActQuantizer& aq, std::span<const std::size_t> idx,
                         double beta, double reg_weight, bool with_grads,
                         const ScaleReference* ref = nullptr) {
  require(!idx.empty(), "evaluate_block: empty batch");
  require(!ref || ref->weight.size() == wq.channels, "evaluate_block: bad scale reference");
  const auto& s = prob.shape;
  const std::size_t nw = wq.v.size();
  const std::vector<T> w = wq.weights<T>();
  const double inv_b = 1.0 / static_cast<double>(idx.size());

  BlockEval ev;
  std::vector<double> v_factor, q_int;
  if (with_grads) {
    ev.grad.v.assign(nw, 0.0);
    ev.grad.weight_scale.assign(wq.channels, 0.0);
    v_factor.resize(nw);
    q_int.resize(nw);
    for (std::size_t i = 0; i < nw; ++i) {
      const double q = wq.base[i] + wq.offset(i);
      const bool inside = q > wq.range.qmin && q < wq.range.qmax;
      v_factor[i] = (wq.hard || !inside) ? 0.0
                                         : wq.scale[i / wq.fan_in] * rectified_sigmoid_grad(wq.v[i]);
      q_int[i] = wq.integer(i);
    }
  }

  model::BlockCache<T> cache;
  std::vector<T> x(s.input_size()), out(s.output_size()), dout(s.output_size());
  std::vector<T> dx(with_grads && aq.enabled ? s.input_size() : 0);
  std::vector<T> dw(with_grads ? nw : 0), db(with_grads ? s.out_channels : 0);
  std::vector<double> gsw(with_grads ? wq.channels : 0);

  for (std::size_t i : idx) {
    const auto in = prob.inputs.row(i);
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = aq.apply(in[j]) - static_cast<T>(prob.input_offset);
    model::block_forward<T>(s, w, prob.bias, x, out, with_grads ? &cache : nullptr);
    const auto tgt = prob.targets.row(i);
    double li = 0.0;
    for (std::size_t o = 0; o < out.size(); ++o) {
      const double d = static_cast<double>(out[o]) - static_cast<double>(tgt[o]);
      li += d * d;
      dout[o] = static_cast<T>(2.0 * d);
    }
    ev.recon += li * inv_b;
    if (!with_grads) continue;

    std::fill(dw.begin(), dw.end(), T{0});
    model::block_backward<T>(s, w, cache, dout, dx, dw, db);

    double nv = 0.0, nsw = 0.0;
    std::fill(gsw.begin(), gsw.end(), 0.0);
    for (std::size_t k = 0; k < nw; ++k) {
      const double g = static_cast<double>(dw[k]);
      const double gv = g * v_factor[k];
      nv += gv * gv;
      ev.grad.v[k] += gv * inv_b;
      gsw[k / wq.fan_in] += g * q_int[k];
    }
    for (std::size_t c = 0; c < wq.channels; ++c) {
      if (ref) gsw[c] *= ref->weight[c];
      nsw += gsw[c] * gsw[c];
      ev.grad.weight_scale[c] += gsw[c] * inv_b;
    }
    double gsa = 0.0;
    if (aq.enabled)
      for (std::size_t j = 0; j < dx.size(); ++j)
        gsa += static_cast<double>(dx[j]) * aq.scale_grad(static_cast<double>(in[j]));
    if (ref) gsa *= ref->act;
    ev.grad.act_scale += gsa * inv_b;

    ev.grad_sq[static_cast<std::size_t>(ParamGroup::kActScale)] += gsa * gsa * inv_b;
    ev.grad_sq[static_cast<std::size_t>(ParamGroup::kWeightRounding)] += nv * inv_b;
    ev.grad_sq[static_cast<std::size_t>(ParamGroup::kWeightScale)] += nsw * inv_b;
  }

  if (reg_weight > 0.0 && !wq.hard) {
    for (std::size_t k = 0; k < nw; ++k) {
      const double h = wq.offset(k);
      const double a = std::abs(2.0 * h - 1.0);
      ev.regularizer += 1.0 - std::pow(a, beta);
      if (with_grads && a > 0.0) {
        const double dreg_dh = -beta * std::pow(a, beta - 1.0) * 2.0 * (2.0 * h - 1.0 > 0 ? 1.0 : -1.0);
        ev.grad.v[k] += reg_weight * dreg_dh * rectified_sigmoid_grad(wq.v[k]);
      }
    }
  }
  ev.total = ev.recon + reg_weight * ev.regularizer;
  return ev;
}

// Mean per-sample reconstruction error over the whole problem.
template <typename T>
double block_mse(const BlockProblem<T>& prob, const WeightQuantizer& wq, const ActQuantizer& aq) {
  std::vector<std::size_t> all(prob.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate_block(prob, wq, aq, all, 1.0, 0.0, false).recon;
}

struct BlockReport {
  double init_mse = 0.0;   // nearest rounding, initial scales
  double final_mse = 0.0;  // after calibration and thresholding
  bool reverted = false;   // calibration lost to nearest rounding; kept init
};

struct BlockCalibration {
  WeightQuantizer weights;
  ActQuantizer act;
  GradTrace trace;
  BlockReport report;
};

// Called before each parameter update with the state that produced the
// step's gradients.
using StepObserver = std::function<void(std::size_t step, const WeightQuantizer&,
                                        const ActQuantizer&, std::span<const std::size_t> batch)>;

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kB1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kB2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kB1 * m_[i] + (1.0 - kB1) * grad[i];
      v_[i] = kB2 * v_[i] + (1.0 - kB2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  std::vector<double> m_, v_;
  long t_ = 0;
};

template <typename T>
BlockCalibration calibrate_block(const BlockProblem<T>& prob, WeightQuantizer wq, ActQuantizer aq,
                                 const QuantConfig& cfg, const RngStream& rng,
                                 const StepObserver& observer = {}) {
  validate(cfg);
  const std::size_t n = prob.size();
  require(n > 0, "calibrate_block: empty calibration set");

  BlockCalibration out;
  {
    WeightQuantizer nearest = wq;
    nearest.finalize();
    out.report.init_mse = block_mse(prob, nearest, aq);
    out.weights = nearest;
    out.act = aq;
  }

  const std::size_t batch = std::min(cfg.batch_size, n);
  const auto warm = static_cast<std::size_t>(cfg.warmup * static_cast<double>(cfg.steps));
  Adam adam_v(wq.v.size()), adam_sw(wq.channels), adam_sa(1);
  const ScaleReference ref{wq.scale, aq.scale};
  std::vector<double> alpha_w(wq.channels, 1.0);
  double alpha_a = 1.0;
  std::vector<std::size_t> idx(batch);
  out.trace.steps.reserve(cfg.steps);

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    double beta = cfg.beta_start, reg = 0.0;
    if (t >= warm) {
      const double prog = static_cast<double>(t - warm) / static_cast<double>(cfg.steps - warm);
      beta = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * prog;
      reg = cfg.reg_weight;
    }
    RngStream srng = rng.derive(t);
    if (batch == n) {
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      // Partial Fisher-Yates over a virtual identity permutation.
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      for (std::size_t i = 0; i < batch; ++i) std::swap(perm[i], perm[i + srng.index(n - i)]);
      std::copy(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch), idx.begin());
    }

    BlockEval ev = evaluate_block(prob, wq, aq, idx, beta, reg, true, &ref);
    if (!std::isfinite(ev.total))
      throw NumericError("block calibration loss is not finite", static_cast<long>(t));

    TraceStep st;
    st.grad_sq = ev.grad_sq;
    st.gamma[static_cast<std::size_t>(ParamGroup::kActScale)] = cosine_step(cfg.lr_act_scale, t, cfg.steps);
    st.gamma[static_cast<std::size_t>(ParamGroup::kWeightRounding)] =
        cosine_step(cfg.lr_rounding, t, cfg.steps);
    st.gamma[static_cast<std::size_t>(ParamGroup::kWeightScale)] =
        cosine_step(cfg.lr_weight_scale, t, cfg.steps);
    st.sigma = cfg.sigma;
    st.n = batch;
    out.trace.steps.push_back(st);
    if (observer) observer(t, wq, aq, idx);

    const auto lr = [&](ParamGroup g) { return st.gamma[static_cast<std::size_t>(g)]; };
    if (cfg.learn_rounding) adam_v.step(wq.v, ev.grad.v, lr(ParamGroup::kWeightRounding));
    if (cfg.learn_weight_scale) {
      adam_sw.step(alpha_w, ev.grad.weight_scale, lr(ParamGroup::kWeightScale));
      for (std::size_t c = 0; c < wq.channels; ++c)
        wq.scale[c] = std::max(ref.weight[c] * alpha_w[c], kScaleFloor);
    }
    if (aq.enabled && cfg.learn_act_scale) {
      adam_sa.step(std::span<double>(&alpha_a, 1), std::span<const double>(&ev.grad.act_scale, 1),
                   lr(ParamGroup::kActScale));
      aq.scale = std::max(ref.act * alpha_a, kScaleFloor);
    }
  }

  wq.finalize();
  const double final_mse = block_mse(prob, wq, aq);
  out.report.final_mse = final_mse;
  if (final_mse <= out.report.init_mse) {
    out.weights = std::move(wq);
    out.act = aq;
  } else {
    out.report.reverted = true;
    out.report.final_mse = out.report.init_mse;
  }
  return out;
}

}  // namespace dfq::quant
