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

#include <cstddef>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/linalg.hpp"
#include "dfqlab/numerics/tensor.hpp"

namespace dfq {

// Covariance shrinkage added to the diagonal so rank-deficient samples still
// give a positive definite estimate.
inline constexpr double kCovarianceShrinkage = 1e-6;

struct GaussianStats {
  std::vector<double> mean;
  linalg::Matrix cov;

  std::size_t dim() const noexcept { return mean.size(); }
};

// Column mean and unbiased covariance (+ shrinkage * I) of an n x d sample.
// Accumulation runs in row order so results are bit-stable per platform.
template <typename T>
GaussianStats gaussian_stats(const Tensor<T>& features,
                             double shrinkage = kCovarianceShrinkage) {
  require(features.rank() == 2, "gaussian_stats: expected an n x d matrix");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (n < 2) throw PreconditionError("gaussian_stats: need at least 2 samples");

  GaussianStats s{std::vector<double>(d, 0.0), linalg::Matrix({d, d})};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      s.mean[j] += static_cast<double>(features(i, j));
  for (auto& m : s.mean) m /= static_cast<double>(n);

  std::vector<double> centered(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      centered[j] = static_cast<double>(features(i, j)) - s.mean[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) s.cov(a, b) += centered[a] * centered[b];
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      const double v = s.cov(a, b) / static_cast<double>(n - 1);
      s.cov(a, b) = s.cov(b, a) = v;
    }
    s.cov(a, a) += shrinkage;
  }
  return s;
}

}  // namespace dfq
