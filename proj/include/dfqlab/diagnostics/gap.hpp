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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/quant/quantized_model.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::diag {

enum class GapLoss { kCrossEntropy, kOutputMse };

inline std::string_view to_string(GapLoss l) {
  return l == GapLoss::kCrossEntropy ? "cross_entropy" : "output_mse";
}

struct GapReport {
  double gap = 0.0;               // test_loss - calibration_loss
  double calibration_loss = 0.0;  // mean over the calibration set
  double test_loss = 0.0;         // mean over the test set
  double bound = 0.0;             // gradient-norm proxy, up to sigma
  std::string provenance;
  GapLoss loss = GapLoss::kCrossEntropy;
};

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Mean test loss minus mean calibration loss.
inline GapReport empirical_gap(std::span<const double> calibration_losses,
                               std::span<const double> test_losses) {
  if (calibration_losses.empty() || test_losses.empty())
    throw PreconditionError("empirical_gap: both sets must be nonempty");
  GapReport r;
  r.calibration_loss = mean_of(calibration_losses);
  r.test_loss = mean_of(test_losses);
  r.gap = r.test_loss - r.calibration_loss;
  return r;
}

// Per-sample losses of the quantized model. Cross-entropy is taken against
// the argmax label; output MSE against the FP model's logits.
template <typename T>
std::vector<double> sample_losses(const quant::QuantizedModel<T>& qm, const world::LabeledSet& set,
                                  GapLoss loss) {
  if (set.size() == 0) throw PreconditionError("sample_losses: empty set");
  const auto z = quant::quantized_logits(qm, set.images);
  if (loss == GapLoss::kCrossEntropy) {
    Tensor<T> onehot({set.size(), set.num_classes()});
    for (std::size_t i = 0; i < set.size(); ++i)
      onehot(i, static_cast<std::size_t>(set.hard_label(i))) = T{1};
    return model::cross_entropy_per_sample(z, onehot);
  }
  const auto ref = model::forward(qm.spec, qm.fp, set.images, false).logits;
  std::vector<double> out(set.size(), 0.0);
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t k = 0; k < z.dim(1); ++k) {
      const double d = static_cast<double>(z(i, k)) - static_cast<double>(ref(i, k));
      out[i] += d * d;
    }
  return out;
}

template <typename T>
GapReport empirical_gap(const quant::QuantizedModel<T>& qm, const world::LabeledSet& calibration,
                        const world::LabeledSet& test, GapLoss loss = GapLoss::kCrossEntropy) {
  const auto lc = sample_losses(qm, calibration, loss);
  const auto lt = sample_losses(qm, test, loss);
  GapReport r = empirical_gap(lc, lt);
  r.provenance = std::string(world::to_string(calibration.provenance));
  r.loss = loss;
  return r;
}

// sum_t gamma_t^2 / sigma_t^2 * g(t) for one group of one trace.
inline double bound_integrand(const quant::GradTrace& trace, quant::ParamGroup g) {
  const auto k = static_cast<std::size_t>(g);
  double s = 0.0;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& st = trace.steps[t];
    if (!(st.grad_sq[k] >= 0.0))
      throw DataError("gradient trace has a negative norm at block " +
                      std::to_string(trace.block) + " step " + std::to_string(t));
    if (!(st.sigma > 0.0)) throw DataError("gradient trace has a non-positive sigma");
    s += st.gamma[k] * st.gamma[k] / (st.sigma * st.sigma) * st.grad_sq[k];
  }
  return s;
}

// (1/N) sqrt(sum over traces, groups and steps of gamma^2 / sigma^2 * g(t)).
inline double gap_bound(std::span<const quant::GradTrace> traces, std::size_t n) {
  if (traces.empty()) throw PreconditionError("gap_bound: no traces");
  if (n == 0) throw PreconditionError("gap_bound: calibration size must be positive");
  double s = 0.0;
  for (const auto& tr : traces)
    for (auto g : quant::kAllGroups) s += bound_integrand(tr, g);
  return std::sqrt(s) / static_cast<double>(n);
}

}  // namespace dfq::diag
