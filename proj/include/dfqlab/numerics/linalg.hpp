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
#include <numeric>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/tensor.hpp"

namespace dfq::linalg {

using Matrix = TensorD;

inline void require_square(const Matrix& a, const char* what) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1))
    throw PreconditionError(std::string(what) + ": expected a square matrix, got " +
                            shape_str(a.shape()));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Matrix c({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < m; ++j) c(i, j) += aip * b(p, j);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix add(const Matrix& a, const Matrix& b, double beta = 1.0) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += beta * b[i];
  return c;
}

inline double frobenius(const Matrix& a) {
  double s = 0.0;
  for (double v : a.vec()) s += v * v;
  return std::sqrt(s);
}

inline double trace(const Matrix& a) {
  require_square(a, "trace");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(0); ++i) s += a(i, i);
  return s;
}

inline Matrix diag(const std::vector<double>& d) {
  Matrix m({d.size(), d.size()});
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

// Max |a_ij - a_ji| relative to the largest entry magnitude.
inline double asymmetry(const Matrix& a) {
  double worst = 0.0, scale = 0.0;
  const std::size_t n = a.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      scale = std::max(scale, std::abs(a(i, j)));
      worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    }
  return scale > 0.0 ? worst / scale : 0.0;
}

struct Eigh {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j pairs with values[j]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline Eigh eigh(const Matrix& input, double symmetry_tol = 1e-9) {
  require_square(input, "eigh");
  if (asymmetry(input) > symmetry_tol)
    throw PreconditionError("eigh: matrix is not symmetric");
  const std::size_t n = input.dim(0);
  Matrix a = input;
  // Work on the exactly symmetric part.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
  Matrix v = Matrix::identity(n);

  const double norm = frobenius(a);
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * norm || off == 0.0) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a(i, i) < a(j, j);
  });
  Eigh out{std::vector<double>(n), Matrix({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

// Q diag(f(lambda)) Q^T.
template <typename F>
Matrix spectral_apply(const Eigh& e, F&& f) {
  const std::size_t n = e.values.size();
  std::vector<double> fl(n);
  for (std::size_t i = 0; i < n; ++i) fl[i] = f(e.values[i]);
  Matrix r({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += e.vectors(i, k) * fl[k] * e.vectors(j, k);
      r(i, j) = r(j, i) = s;
    }
  return r;
}

inline constexpr double kPsdClampTol = 1e-9;
inline constexpr double kPsdErrorTol = 1e-6;

// Principal square root of a symmetric PSD matrix. Eigenvalues in
// [-1e-6, 0) are treated as round-off and clamped to zero; anything more
// negative is rejected. Tolerances scale with max(1, |lambda_max|).
inline Matrix sqrtm_psd(const Matrix& a) {
  const Eigh e = eigh(a);
  double scale = 1.0;
  for (double v : e.values) scale = std::max(scale, std::abs(v));
  for (double v : e.values)
    if (v < -kPsdErrorTol * scale)
      throw NumericError("sqrtm_psd: matrix is not PSD (eigenvalue " +
                         std::to_string(v) + ")");
  return spectral_apply(e, [](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; });
}

}  // namespace dfq::linalg
