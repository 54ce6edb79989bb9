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
#include <string>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/linalg.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/stats.hpp"
#include "dfqlab/numerics/tensor.hpp"

namespace dfq::diag {

// Frechet distance between two Gaussians:
//   |ma - mb|^2 + Tr(Ca + Cb - 2 (Ca Cb)^(1/2)),
// with the cross term evaluated as sqrtm(S Cb S), S = sqrtm(Ca), which is
// symmetric PSD and has the same trace. Round-off below zero is clamped.
inline double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.cov.dim(0) != a.dim() || b.cov.dim(0) != b.dim())
    throw PreconditionError("fid: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()) + ")");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }
  const linalg::Matrix s = linalg::sqrtm_psd(a.cov);
  const linalg::Matrix cross = linalg::sqrtm_psd(linalg::matmul(linalg::matmul(s, b.cov), s));
  const double v = mean_term + linalg::trace(a.cov) + linalg::trace(b.cov) -
                   2.0 * linalg::trace(cross);
  return std::max(v, 0.0);
}

struct RpcFidRow {
  int class_id = -1;
  double numerator = 0.0;    // mean FID(real half, synthetic) over resamples
  double denominator = 0.0;  // mean FID(real half, disjoint real half)
  double rpc_fid = 0.0;      // numerator / denominator
  std::size_t real_count = 0;
  std::size_t synthetic_count = 0;
  std::size_t half = 0;
  std::size_t resamples = 0;
};

namespace detail {

template <typename T>
TensorD gather(const Tensor<T>& src, std::span<const std::size_t> idx) {
  const std::size_t d = src.dim(1);
  TensorD out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = static_cast<double>(src(idx[i], j));
  return out;
}

}  // namespace detail

// Smallest half size accepted for d-dimensional features.
inline std::size_t min_half(std::size_t d) { return d + 2; }

// Relative per-class FID from n x d feature matrices. Each resample draws
// a real half X1 and n_half synthetic rows for the numerator, and a fresh
// disjoint split (X2, X3) of the real rows for the denominator. The score
// is the ratio of the mean numerator to the mean denominator.
template <typename T>
RpcFidRow rpc_fid(const Tensor<T>& real, const Tensor<T>& synthetic, std::size_t n_half,
                  std::size_t resamples, const RngStream& rng, int class_id = -1) {
  require(real.rank() == 2 && synthetic.rank() == 2, "rpc_fid: expected n x d features");
  if (real.dim(1) != synthetic.dim(1))
    throw PreconditionError("rpc_fid: feature dimension mismatch");
  const std::size_t d = real.dim(1);
  if (resamples < 1) throw PreconditionError("rpc_fid: need at least one resample");
  if (n_half < min_half(d))
    throw PreconditionError("rpc_fid: half size " + std::to_string(n_half) +
                            " is below the minimum " + std::to_string(min_half(d)) +
                            " for d = " + std::to_string(d));
  if (real.dim(0) < 2 * n_half)
    throw PreconditionError("rpc_fid: need at least " + std::to_string(2 * n_half) +
                            " real samples, got " + std::to_string(real.dim(0)));
  if (synthetic.dim(0) < n_half)
    throw PreconditionError("rpc_fid: need at least " + std::to_string(n_half) +
                            " synthetic samples, got " + std::to_string(synthetic.dim(0)));

  RpcFidRow row;
  row.class_id = class_id;
  row.real_count = real.dim(0);
  row.synthetic_count = synthetic.dim(0);
  row.half = n_half;
  row.resamples = resamples;
  for (std::size_t r = 0; r < resamples; ++r) {
    RngStream s = rng.derive(r);
    const auto p_num = s.permutation(real.dim(0));
    const auto p_syn = s.permutation(synthetic.dim(0));
    const auto p_den = s.permutation(real.dim(0));
    const std::span<const std::size_t> num_idx(p_num.data(), n_half);
    const std::span<const std::size_t> syn_idx(p_syn.data(), n_half);
    const std::span<const std::size_t> x2(p_den.data(), n_half);
    const std::span<const std::size_t> x3(p_den.data() + n_half, n_half);
    row.numerator += fid(gaussian_stats(detail::gather(real, num_idx)),
                         gaussian_stats(detail::gather(synthetic, syn_idx)));
    row.denominator += fid(gaussian_stats(detail::gather(real, x2)),
                           gaussian_stats(detail::gather(real, x3)));
  }
  row.numerator /= static_cast<double>(resamples);
  row.denominator /= static_cast<double>(resamples);
  if (!(row.denominator > 0.0))
    throw NumericError("rpc_fid: real-vs-real FID is zero; features are degenerate");
  row.rpc_fid = row.numerator / row.denominator;
  return row;
}

}  // namespace dfq::diag
