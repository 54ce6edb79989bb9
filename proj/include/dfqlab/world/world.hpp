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
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/tensor.hpp"
#include "dfqlab/vocab/prompts.hpp"
#include "dfqlab/vocab/vocabulary.hpp"

namespace dfq::world {

enum class Composition { kSpatial, kConvex };

struct WorldSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  double noise_sigma = 0.25;
  // Prototype fields are sums of cosine modes with frequencies up to this
  // cutoff (cycles per frame), standardized and scaled by `contrast`.
  int max_frequency = 3;
  double contrast = 0.07;
  double lambda_lo = 0.3;
  double lambda_hi = 0.7;
  Composition composition = Composition::kSpatial;
  std::uint64_t seed = 0;
  std::vector<double> polysemy_bias;  // one per class
  std::vector<int> meanings_per_class;

  std::size_t num_classes() const noexcept { return polysemy_bias.size(); }
  std::size_t pixels() const noexcept { return height * width; }
  Shape image_shape() const { return {1, height, width}; }
};

inline void validate(const WorldSpec& w) {
  if (w.num_classes() < 1) throw ConfigError("world needs at least one class");
  if (w.height < 2 || w.width < 2) throw ConfigError("world images must be at least 2x2");
  if (!(w.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(0.0 < w.lambda_lo && w.lambda_lo <= w.lambda_hi && w.lambda_hi < 1.0))
    throw ConfigError("mixup ratio range must satisfy 0 < lo <= hi < 1");
  if (w.meanings_per_class.size() != w.num_classes())
    throw ConfigError("meanings_per_class must have one entry per class");
  for (std::size_t k = 0; k < w.num_classes(); ++k) {
    const double b = w.polysemy_bias[k];
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("polysemy_bias outside [0, 1]");
    if (b > 0.0 && w.meanings_per_class[k] < 2)
      throw ConfigError("polysemous class needs an alternative meaning");
  }
}

inline WorldSpec spec_from_vocabulary(const vocab::Vocabulary& v, WorldSpec base = {}) {
  vocab::validate(v);
  base.polysemy_bias.clear();
  base.meanings_per_class.clear();
  for (const auto& c : v) {
    if (!c.meanings.front().in_distribution)
      throw ConfigError("class '" + c.label + "': the first meaning must be the in-distribution one");
    base.polysemy_bias.push_back(c.polysemy_bias);
    base.meanings_per_class.push_back(static_cast<int>(c.meanings.size()));
  }
  return base;
}

inline nlohmann::ordered_json to_json(const WorldSpec& w) {
  nlohmann::ordered_json j;
  j["height"] = w.height;
  j["width"] = w.width;
  j["noise_sigma"] = w.noise_sigma;
  j["max_frequency"] = w.max_frequency;
  j["contrast"] = w.contrast;
  j["lambda_lo"] = w.lambda_lo;
  j["lambda_hi"] = w.lambda_hi;
  j["composition"] = w.composition == Composition::kSpatial ? "spatial" : "convex";
  j["seed"] = w.seed;
  j["polysemy_bias"] = w.polysemy_bias;
  j["meanings_per_class"] = w.meanings_per_class;
  return j;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t config_hash(const WorldSpec& w) { return fnv1a64(to_json(w).dump()); }

enum class Provenance { kReal, kSyntheticSingle, kSyntheticMixup, kSyntheticNClass, kAugmented };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kReal: return "real";
    case Provenance::kSyntheticSingle: return "synthetic_single";
    case Provenance::kSyntheticMixup: return "synthetic_mixup";
    case Provenance::kSyntheticNClass: return "synthetic_nclass";
    case Provenance::kAugmented: return "augmented";
  }
  return "?";
}

inline Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::kReal, Provenance::kSyntheticSingle, Provenance::kSyntheticMixup,
                 Provenance::kSyntheticNClass, Provenance::kAugmented})
    if (to_string(p) == s) return p;
  throw ParseError("unknown provenance '" + std::string(s) + "'");
}

// Images with soft labels. `soft_labels` is n x K, each row a probability
// vector; `class_ids` lists the classes present in each sample.
struct LabeledSet {
  TensorF images;  // n x 1 x H x W
  TensorF soft_labels;
  std::vector<std::vector<int>> class_ids;
  Provenance provenance = Provenance::kReal;

  std::size_t size() const noexcept { return class_ids.size(); }
  std::size_t num_classes() const { return soft_labels.dim(1); }

  // Argmax of the soft label (lowest id on ties).
  int hard_label(std::size_t i) const {
    const auto row = soft_labels.row(i);
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
};

// One rendered sample.
struct Sample {
  std::vector<float> image;
  std::vector<float> soft_label;
  std::vector<int> class_ids;
  int off_distribution_components = 0;
};

class World {
 public:
  explicit World(WorldSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    prototypes_.resize(spec_.num_classes());
    for (std::size_t k = 0; k < spec_.num_classes(); ++k)
      for (int m = 0; m < spec_.meanings_per_class[k]; ++m)
        prototypes_[k].push_back(make_prototype(static_cast<int>(k), m));
  }

  const WorldSpec& spec() const noexcept { return spec_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes(); }

  // Meaning 0 is the in-distribution sense; higher ids are alternative senses.
  const std::vector<float>& prototype(int cls, int meaning = 0) const {
    check_class(cls);
    return prototypes_[static_cast<std::size_t>(cls)].at(static_cast<std::size_t>(meaning));
  }

  void check_class(int cls) const {
    if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes())
      throw PreconditionError("unknown class id " + std::to_string(cls));
  }

  // Picks the sense a prompt for `cls` resolves to.
  int resolve_meaning(int cls, RngStream& rng) const {
    const auto k = static_cast<std::size_t>(cls);
    const double bias = spec_.polysemy_bias[k];
    if (bias > 0.0 && rng.uniform() < bias) {
      const int alternatives = spec_.meanings_per_class[k] - 1;
      return 1 + static_cast<int>(rng.index(static_cast<std::size_t>(alternatives)));
    }
    return 0;
  }

  void add_noise(std::vector<float>& img, RngStream& rng) const {
    for (auto& p : img) {
      const double v = static_cast<double>(p) + spec_.noise_sigma * rng.normal();
      p = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

 private:
  // Band-limited random field seeded by (world seed, class, meaning).
  std::vector<float> make_prototype(int cls, int meaning) const {
    RngStream rng(hash_combine(spec_.seed, 0x70726f746full),
                  hash_combine(static_cast<std::uint64_t>(cls),
                               static_cast<std::uint64_t>(meaning)));
    const std::size_t h = spec_.height, w = spec_.width;
    std::vector<double> field(h * w, 0.0);
    const int f = spec_.max_frequency;
    for (int u = 0; u <= f; ++u)
      for (int v = -f; v <= f; ++v) {
        if (u == 0 && v <= 0) continue;
        const double amp = rng.normal() / std::sqrt(1.0 + u * u + v * v);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            field[y * w + x] +=
                amp * std::cos(2.0 * std::numbers::pi *
                                   (u * static_cast<double>(y) / h + v * static_cast<double>(x) / w) +
                               phase);
      }
    double mean = 0.0, sq = 0.0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    for (double v : field) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(field.size()));
    std::vector<float> img(h * w);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = static_cast<float>(
          std::clamp(0.5 + spec_.contrast * (field[i] - mean) / sd, 0.0, 1.0));
    return img;
  }

  WorldSpec spec_;
  std::vector<std::vector<std::vector<float>>> prototypes_;
};

namespace detail {

inline LabeledSet make_set(const World& w, std::vector<Sample> samples, Provenance p) {
  const std::size_t n = samples.size();
  LabeledSet s;
  s.images = TensorF({n, 1, w.spec().height, w.spec().width});
  s.soft_labels = TensorF({n, w.num_classes()});
  s.provenance = p;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(samples[i].image.begin(), samples[i].image.end(), s.images.row(i).begin());
    std::copy(samples[i].soft_label.begin(), samples[i].soft_label.end(),
              s.soft_labels.row(i).begin());
    s.class_ids.push_back(std::move(samples[i].class_ids));
  }
  return s;
}

// Integer partition of `total` into parts proportional to `fractions`, each at
// least 1, by largest remainder.
inline std::vector<std::size_t> partition_extent(std::size_t total,
                                                 const std::vector<double>& fractions) {
  const std::size_t n = fractions.size();
  require(total >= n, "partition: too many parts for extent");
  const double free = static_cast<double>(total - n);
  std::vector<std::size_t> parts(n, 1);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = n;
  for (std::size_t k = 0; k < n; ++k) {
    const double exact = free * fractions[k];
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    parts[k] += whole;
    used += whole;
    rem.emplace_back(exact - static_cast<double>(whole), k);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++parts[rem[i].second];
  return parts;
}

}  // namespace detail

// Real training distribution: only the in-distribution sense of `cls`, plus
// pixel noise. Hard labels.
inline LabeledSet sample_real(const World& w, int cls, std::size_t n, RngStream& rng) {
  w.check_class(cls);
  if (n < 1) throw PreconditionError("sample_real: n must be at least 1");
  std::vector<Sample> samples(n);
  for (auto& s : samples) {
    s.image = w.prototype(cls, 0);
    w.add_noise(s.image, rng);
    s.soft_label.assign(w.num_classes(), 0.0f);
    s.soft_label[static_cast<std::size_t>(cls)] = 1.0f;
    s.class_ids = {cls};
  }
  return detail::make_set(w, std::move(samples), Provenance::kReal);
}

// `per_class` samples of every class, class-major order.
inline LabeledSet sample_real_balanced(const World& w, std::size_t per_class, const RngStream& rng);

inline LabeledSet concat(const std::vector<LabeledSet>& parts) {
  require(!parts.empty(), "concat: no parts");
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  const auto& shape = parts.front().images.shape();
  LabeledSet out;
  out.images = TensorF({n, shape[1], shape[2], shape[3]});
  out.soft_labels = TensorF({n, parts.front().num_classes()});
  out.provenance = parts.front().provenance;
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i, ++at) {
      std::copy(p.images.row(i).begin(), p.images.row(i).end(), out.images.row(at).begin());
      std::copy(p.soft_labels.row(i).begin(), p.soft_labels.row(i).end(),
                out.soft_labels.row(at).begin());
      out.class_ids.push_back(p.class_ids[i]);
    }
  }
  return out;
}

inline LabeledSet sample_real_balanced(const World& w, std::size_t per_class,
                                       const RngStream& rng) {
  std::vector<LabeledSet> parts;
  for (std::size_t k = 0; k < w.num_classes(); ++k) {
    RngStream sub = rng.derive(k);
    parts.push_back(sample_real(w, static_cast<int>(k), per_class, sub));
  }
  return concat(parts);
}

inline LabeledSet subset(const LabeledSet& s, const std::vector<std::size_t>& idx) {
  const auto& shape = s.images.shape();
  LabeledSet out;
  out.images = TensorF({idx.size(), shape[1], shape[2], shape[3]});
  out.soft_labels = TensorF({idx.size(), s.num_classes()});
  out.provenance = s.provenance;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(s.images.row(idx[i]).begin(), s.images.row(idx[i]).end(),
              out.images.row(i).begin());
    std::copy(s.soft_labels.row(idx[i]).begin(), s.soft_labels.row(idx[i]).end(),
              out.soft_labels.row(i).begin());
    out.class_ids.push_back(s.class_ids[idx[i]]);
  }
  return out;
}

// Stand-in for the text-conditioned generator. Single-label prompts render one
// sense of the class (the alternative sense with probability polysemy_bias).
// Multi-class prompts split the frame into contiguous strips along a random
// axis, one per class, with widths from U(lambda_lo, lambda_hi) (two classes)
// or a flat Dirichlet (more); each class resolves its own sense and the soft
// label is the strip area fractions.
inline Sample render_prompt(const World& w, const vocab::PromptRecord& record, RngStream& rng) {
  for (int c : record.class_ids) w.check_class(c);
  require(!record.class_ids.empty(), "render_prompt: record has no classes");
  const auto& spec = w.spec();
  const std::size_t h = spec.height, wd = spec.width, k = w.num_classes();
  Sample s;
  s.class_ids = record.class_ids;
  s.soft_label.assign(k, 0.0f);

  if (record.class_ids.size() == 1) {
    const int cls = record.class_ids[0];
    const int meaning = w.resolve_meaning(cls, rng);
    s.off_distribution_components = meaning != 0;
    s.image = w.prototype(cls, meaning);
    w.add_noise(s.image, rng);
    s.soft_label[static_cast<std::size_t>(cls)] = 1.0f;
    return s;
  }

  const std::size_t n = record.class_ids.size();
  std::vector<double> fractions;
  if (n == 2) {
    const double lambda = rng.uniform(spec.lambda_lo, spec.lambda_hi);
    fractions = {lambda, 1.0 - lambda};
  } else {
    fractions = rng.dirichlet_uniform(n);
  }
  const bool split_columns = rng.index(2) == 0;
  const bool reversed = rng.index(2) == 1;
  std::vector<int> meanings(n);
  for (std::size_t i = 0; i < n; ++i) {
    meanings[i] = w.resolve_meaning(record.class_ids[i], rng);
    s.off_distribution_components += meanings[i] != 0;
  }

  s.image.assign(h * wd, 0.0f);
  if (spec.composition == Composition::kConvex) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& proto = w.prototype(record.class_ids[i], meanings[i]);
      for (std::size_t p = 0; p < h * wd; ++p)
        s.image[p] += static_cast<float>(fractions[i]) * proto[p];
      s.soft_label[static_cast<std::size_t>(record.class_ids[i])] +=
          static_cast<float>(fractions[i]);
    }
  } else {
    const std::size_t extent = split_columns ? wd : h;
    const auto parts = detail::partition_extent(extent, fractions);
    std::size_t start = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t i = reversed ? n - 1 - r : r;
      const auto& proto = w.prototype(record.class_ids[i], meanings[i]);
      const std::size_t stop = start + parts[i];
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wd; ++x) {
          const std::size_t coord = split_columns ? x : y;
          if (coord >= start && coord < stop) s.image[y * wd + x] = proto[y * wd + x];
        }
      s.soft_label[static_cast<std::size_t>(record.class_ids[i])] +=
          static_cast<float>(static_cast<double>(parts[i]) / static_cast<double>(extent));
      start = stop;
    }
  }
  w.add_noise(s.image, rng);
  return s;
}

// Stream id used to render a record from its own seed.
inline constexpr std::uint64_t kRenderStream = 0x72656e646572ull;

inline Provenance provenance_for(vocab::PromptStrategy s) {
  switch (s) {
    case vocab::PromptStrategy::kMixup: return Provenance::kSyntheticMixup;
    case vocab::PromptStrategy::kNClass: return Provenance::kSyntheticNClass;
    default: return Provenance::kSyntheticSingle;
  }
}

// Renders every record from its own seed, so the result does not depend on
// record order or on how rendering is scheduled.
inline LabeledSet render_manifest(const World& w, const std::vector<vocab::PromptRecord>& records) {
  require(!records.empty(), "render_manifest: empty manifest");
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    RngStream rng(r.seed, kRenderStream);
    samples.push_back(render_prompt(w, r, rng));
  }
  return detail::make_set(w, std::move(samples), provenance_for(records.front().strategy));
}

}  // namespace dfq::world
