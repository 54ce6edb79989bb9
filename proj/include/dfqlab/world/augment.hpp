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
#include <optional>
#include <string_view>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/world/world.hpp"

// Pixel-level mixing baselines applied to an existing labeled set. Sample i
// is mixed with a uniformly drawn partner j != i.
namespace dfq::world {

enum class AugmentKind { kMixupPixels, kCutMix, kResizeMix };

inline std::string_view to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::kMixupPixels: return "mixup_pixels";
    case AugmentKind::kCutMix: return "cutmix";
    case AugmentKind::kResizeMix: return "resizemix";
  }
  return "?";
}

inline AugmentKind augment_from_string(std::string_view s) {
  for (auto k : {AugmentKind::kMixupPixels, AugmentKind::kCutMix, AugmentKind::kResizeMix})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown augmentation '" + std::string(s) + "'");
}

struct AugmentConfig {
  double mixup_alpha = 1.0;
  double resize_lo = 0.1;
  double resize_hi = 0.8;
  // Overrides the random mixing ratio (share kept from sample i). For
  // resizemix it overrides the paste scale instead.
  std::optional<double> fixed_lambda;
};

// Bilinear resize of a single-channel h x w image to oh x ow (align-corners
// off, pixel-centre sampling).
inline std::vector<float> resize_bilinear(std::span<const float> src, std::size_t h,
                                          std::size_t w, std::size_t oh, std::size_t ow) {
  std::vector<float> out(oh * ow);
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = (1 - tx) * src[y0 * w + x0] + tx * src[y0 * w + x1];
      const double bot = (1 - tx) * src[y1 * w + x0] + tx * src[y1 * w + x1];
      out[y * ow + x] = static_cast<float>((1 - ty) * top + ty * bot);
    }
  }
  return out;
}

inline LabeledSet augment(const LabeledSet& set, AugmentKind kind, RngStream& rng,
                          const AugmentConfig& cfg = {}) {
  const std::size_t n = set.size();
  if (n < 2) throw PreconditionError("augment: need at least two samples");
  const std::size_t h = set.images.dim(2), w = set.images.dim(3), hw = h * w;
  const std::size_t k = set.num_classes();

  LabeledSet out = set;
  out.provenance = Provenance::kAugmented;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    const auto xi = set.images.row(i);
    const auto xj = set.images.row(j);
    auto dst = out.images.row(i);
    double share_j = 0.0;  // label weight moved to sample j

    switch (kind) {
      case AugmentKind::kMixupPixels: {
        const double lambda =
            cfg.fixed_lambda ? *cfg.fixed_lambda : rng.beta(cfg.mixup_alpha, cfg.mixup_alpha);
        for (std::size_t p = 0; p < hw; ++p)
          dst[p] = static_cast<float>(lambda * xi[p] + (1.0 - lambda) * xj[p]);
        share_j = 1.0 - lambda;
        break;
      }
      case AugmentKind::kCutMix: {
        const double lambda = cfg.fixed_lambda ? *cfg.fixed_lambda : rng.uniform();
        const double cut = std::sqrt(1.0 - lambda);
        const auto ch = static_cast<std::size_t>(std::lround(cut * static_cast<double>(h)));
        const auto cw = static_cast<std::size_t>(std::lround(cut * static_cast<double>(w)));
        const std::size_t y0 = rng.index(h - ch + 1), x0 = rng.index(w - cw + 1);
        for (std::size_t y = y0; y < y0 + ch; ++y)
          for (std::size_t x = x0; x < x0 + cw; ++x) dst[y * w + x] = xj[y * w + x];
        share_j = static_cast<double>(ch * cw) / static_cast<double>(hw);
        break;
      }
      case AugmentKind::kResizeMix: {
        const double tau =
            cfg.fixed_lambda ? *cfg.fixed_lambda : rng.uniform(cfg.resize_lo, cfg.resize_hi);
        const std::size_t ph = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(tau * static_cast<double>(h))), 1, h);
        const std::size_t pw = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(tau * static_cast<double>(w))), 1, w);
        const auto patch = resize_bilinear(xj, h, w, ph, pw);
        const std::size_t y0 = rng.index(h - ph + 1), x0 = rng.index(w - pw + 1);
        for (std::size_t y = 0; y < ph; ++y)
          for (std::size_t x = 0; x < pw; ++x) dst[(y0 + y) * w + x0 + x] = patch[y * pw + x];
        share_j = static_cast<double>(ph * pw) / static_cast<double>(hw);
        break;
      }
    }

    for (auto& p : dst) p = std::clamp(p, 0.0f, 1.0f);
    auto lab = out.soft_labels.row(i);
    const auto yi = set.soft_labels.row(i);
    const auto yj = set.soft_labels.row(j);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      lab[c] = static_cast<float>((1.0 - share_j) * yi[c] + share_j * yj[c]);
      total += lab[c];
    }
    for (auto& v : lab) v = static_cast<float>(v / total);

    std::vector<int> ids;
    for (std::size_t c = 0; c < k; ++c)
      if (lab[c] > 0.0f) ids.push_back(static_cast<int>(c));
    out.class_ids[i] = std::move(ids);
  }
  return out;
}

}  // namespace dfq::world
