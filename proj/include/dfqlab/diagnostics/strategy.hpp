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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/vocab/prompts.hpp"
#include "dfqlab/vocab/vocabulary.hpp"
#include "dfqlab/world/augment.hpp"
#include "dfqlab/world/world.hpp"

// Calibration strategies: where the calibration images come from and what
// is done to them. Names are "<source>" or "<source>+<augmentation>", e.g.
// "real", "mixup", "single+cutmix", "nclass3", "mixup_high".
namespace dfq::diag {

enum class Source {
  kReal,
  kSingle,
  kMixup,
  kMixupHigh,
  kMixupLow,
  kNClass2,
  kNClass3,
  kNClass4,
  kHypernym,
  kDefinition,
  kHypBackground,
};

inline constexpr std::array<std::pair<Source, std::string_view>, 11> kSourceNames = {{
    {Source::kReal, "real"},
    {Source::kSingle, "single"},
    {Source::kMixup, "mixup"},
    {Source::kMixupHigh, "mixup_high"},
    {Source::kMixupLow, "mixup_low"},
    {Source::kNClass2, "nclass2"},
    {Source::kNClass3, "nclass3"},
    {Source::kNClass4, "nclass4"},
    {Source::kHypernym, "hypernym"},
    {Source::kDefinition, "definition"},
    {Source::kHypBackground, "hyp_background"},
}};

inline std::string_view to_string(Source s) {
  for (const auto& [k, v] : kSourceNames)
    if (k == s) return v;
  return "?";
}

struct Strategy {
  Source source = Source::kReal;
  std::optional<world::AugmentKind> augment;

  std::string name() const {
    std::string n(to_string(source));
    if (augment) n += "+" + std::string(world::to_string(*augment));
    return n;
  }
  bool uses_prompts() const { return source != Source::kReal; }
  // Similarity pairing reads class vectors from the trained model.
  bool needs_model() const {
    return source == Source::kMixupHigh || source == Source::kMixupLow;
  }
  bool operator==(const Strategy&) const = default;
};

inline Strategy parse_strategy(std::string_view name) {
  Strategy s;
  std::string_view base = name;
  if (const auto plus = name.find('+'); plus != std::string_view::npos) {
    base = name.substr(0, plus);
    s.augment = world::augment_from_string(name.substr(plus + 1));
  }
  for (const auto& [k, v] : kSourceNames)
    if (v == base) {
      s.source = k;
      return s;
    }
  throw ConfigError("unknown calibration strategy '" + std::string(name) + "'");
}

// Stream ids; each is combined with the experiment seed.
namespace streams {
inline constexpr std::uint64_t kTrainData = 1;
inline constexpr std::uint64_t kTestData = 2;
inline constexpr std::uint64_t kTraining = 3;
inline constexpr std::uint64_t kRealCalibration = 10;
inline constexpr std::uint64_t kPrompts = 20;
inline constexpr std::uint64_t kAugment = 30;
inline constexpr std::uint64_t kQuant = 40;
inline constexpr std::uint64_t kRpcFid = 50;
inline constexpr std::uint64_t kRpcFidData = 51;
}  // namespace streams

// Rows of the classifier weight matrix, one per class.
template <typename T>
TensorD class_vectors(const model::ModelParams<T>& p) {
  const auto& w = p.layers[model::kNumBlocks - 1].weight;
  TensorD out({w.dim(0), w.dim(1)});
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<double>(w[i]);
  return out;
}

// Prompt manifest for a prompt-based source. Every source draws from its own
// stream, so adding a strategy never changes another's prompts.
inline std::vector<vocab::PromptRecord> generate_prompts(
    Source source, const vocab::Vocabulary& vocab, const std::vector<std::string>& templates,
    std::size_t count, std::uint64_t seed, const std::optional<TensorD>& vectors = std::nullopt) {
  const RngStream rng = RngStream(seed, streams::kPrompts).derive(static_cast<std::uint64_t>(source));
  switch (source) {
    case Source::kSingle: return vocab::gen_single_class(vocab, templates, count, rng);
    case Source::kMixup: return vocab::gen_mixup_class(vocab, templates, count, {}, rng);
    case Source::kMixupHigh:
    case Source::kMixupLow: {
      if (!vectors) throw ConfigError("similarity pairing needs the trained model's class vectors");
      vocab::PairingPolicy policy{source == Source::kMixupHigh ? vocab::PairingMode::kHighSimilarity
                                                               : vocab::PairingMode::kLowSimilarity,
                                  vectors};
      return vocab::gen_mixup_class(vocab, templates, count, policy, rng);
    }
    case Source::kNClass2: return vocab::gen_nclass(vocab, templates, count, 2, rng);
    case Source::kNClass3: return vocab::gen_nclass(vocab, templates, count, 3, rng);
    case Source::kNClass4: return vocab::gen_nclass(vocab, templates, count, 4, rng);
    case Source::kHypernym:
      return vocab::gen_variant(vocab, templates, count, vocab::PromptStrategy::kHypernym, rng);
    case Source::kDefinition:
      return vocab::gen_variant(vocab, templates, count, vocab::PromptStrategy::kDefinition, rng);
    case Source::kHypBackground:
      return vocab::gen_variant(vocab, templates, count, vocab::PromptStrategy::kHypBackground,
                                rng);
    case Source::kReal: break;
  }
  throw PreconditionError("generate_prompts: source has no prompts");
}

// `count` real samples, class-balanced up to one leftover per class, in a
// seeded random order. Shared by every real-based strategy of a seed.
inline world::LabeledSet real_calibration_set(const world::World& w, std::size_t count,
                                              std::uint64_t seed) {
  if (count == 0) throw ConfigError("calibration size must be positive");
  const std::size_t k = w.num_classes();
  const std::size_t per_class = (count + k - 1) / k;
  const RngStream rng(seed, streams::kRealCalibration);
  auto pool = world::sample_real_balanced(w, per_class, rng.derive(0));
  RngStream order = rng.derive(1);
  auto perm = order.permutation(pool.size());
  perm.resize(count);
  return world::subset(pool, perm);
}

inline world::LabeledSet apply_augment(const world::LabeledSet& set, world::AugmentKind kind,
                                       std::uint64_t seed) {
  RngStream rng = RngStream(seed, streams::kAugment).derive(static_cast<std::uint64_t>(kind));
  return world::augment(set, kind, rng);
}

}  // namespace dfq::diag
