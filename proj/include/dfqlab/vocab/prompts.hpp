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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/numerics/rng.hpp"
#include "dfqlab/numerics/tensor.hpp"
#include "dfqlab/vocab/vocabulary.hpp"

namespace dfq::vocab {

enum class PromptStrategy { kSingle, kMixup, kNClass, kHypernym, kDefinition, kHypBackground };

inline std::string_view to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::kSingle: return "single";
    case PromptStrategy::kMixup: return "mixup";
    case PromptStrategy::kNClass: return "nclass";
    case PromptStrategy::kHypernym: return "hypernym";
    case PromptStrategy::kDefinition: return "definition";
    case PromptStrategy::kHypBackground: return "hyp_background";
  }
  return "?";
}

inline PromptStrategy strategy_from_string(std::string_view s) {
  for (auto v : {PromptStrategy::kSingle, PromptStrategy::kMixup, PromptStrategy::kNClass,
                 PromptStrategy::kHypernym, PromptStrategy::kDefinition,
                 PromptStrategy::kHypBackground})
    if (to_string(v) == s) return v;
  throw ParseError("unknown prompt strategy '" + std::string(s) + "'");
}

// Number of class labels a prompt names; single-label variants count as one.
inline bool is_multi_class(PromptStrategy s) {
  return s == PromptStrategy::kMixup || s == PromptStrategy::kNClass;
}

struct PromptRecord {
  std::uint64_t id = 0;
  PromptStrategy strategy = PromptStrategy::kSingle;
  int template_id = 0;
  std::vector<int> class_ids;
  std::string text;
  std::uint64_t seed = 0;

  bool operator==(const PromptRecord&) const = default;
};

inline void validate(const PromptRecord& r) {
  const std::set<int> uniq(r.class_ids.begin(), r.class_ids.end());
  if (uniq.size() != r.class_ids.size())
    throw DataError("prompt record " + std::to_string(r.id) + " repeats a class id");
  const auto n = r.class_ids.size();
  bool ok = true;
  switch (r.strategy) {
    case PromptStrategy::kMixup: ok = n == 2; break;
    case PromptStrategy::kNClass: ok = n >= 2 && n <= 4; break;
    default: ok = n == 1; break;
  }
  if (!ok)
    throw DataError("prompt record " + std::to_string(r.id) + ": strategy " +
                    std::string(to_string(r.strategy)) + " cannot carry " +
                    std::to_string(n) + " class ids");
}

enum class PairingMode { kRandom, kHighSimilarity, kLowSimilarity };

inline PairingMode pairing_from_string(std::string_view s) {
  if (s == "random") return PairingMode::kRandom;
  if (s == "high_similarity" || s == "high") return PairingMode::kHighSimilarity;
  if (s == "low_similarity" || s == "low") return PairingMode::kLowSimilarity;
  throw ConfigError("unknown pairing mode '" + std::string(s) + "'");
}

struct PairingPolicy {
  PairingMode mode = PairingMode::kRandom;
  // K x d class-representative vectors; required for the similarity modes.
  std::optional<TensorD> class_vectors;
};

// Partner for `anchor` among `num_classes` classes. Similarity modes take the
// argmax / argmin cosine similarity over the other classes, lowest id on ties.
inline int pair_classes(const PairingPolicy& policy, std::size_t num_classes, int anchor,
                        RngStream& rng) {
  if (num_classes < 2) throw ConfigError("pairing needs at least two classes");
  if (anchor < 0 || static_cast<std::size_t>(anchor) >= num_classes)
    throw PreconditionError("pairing anchor " + std::to_string(anchor) + " out of range");

  if (policy.mode == PairingMode::kRandom) {
    const auto pick = static_cast<int>(rng.index(num_classes - 1));
    return pick >= anchor ? pick + 1 : pick;
  }

  if (!policy.class_vectors)
    throw ConfigError("similarity pairing requires class-representative vectors");
  const TensorD& v = *policy.class_vectors;
  require(v.rank() == 2 && v.dim(0) == num_classes,
          "class vector table must be K x d");
  const std::size_t d = v.dim(1);
  auto norm = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += v(i, k) * v(i, k);
    return std::sqrt(s);
  };
  const auto a = static_cast<std::size_t>(anchor);
  const double na = norm(a);
  int best = -1;
  double best_sim = 0.0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (j == a) continue;
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += v(a, k) * v(j, k);
    const double denom = na * norm(j);
    const double sim = denom > 0.0 ? dot / denom : 0.0;
    const bool better = policy.mode == PairingMode::kHighSimilarity ? sim > best_sim
                                                                    : sim < best_sim;
    if (best < 0 || better) {
      best = static_cast<int>(j);
      best_sim = sim;
    }
  }
  return best;
}

namespace detail {

inline void require_pools(const Vocabulary& vocab, const std::vector<std::string>& templates) {
  if (vocab.empty()) throw ConfigError("vocabulary is empty");
  if (templates.empty()) throw ConfigError("template pool is empty");
}

inline std::string join_labels(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += " and ";
    s += vocab.at(static_cast<std::size_t>(ids[i])).label;
  }
  return s;
}

// n distinct classes drawn sequentially, each uniform over the classes not yet
// taken. For n = 2 this is exactly the random mixup pairing draw.
inline std::vector<int> draw_distinct(std::size_t num_classes, std::size_t n, RngStream& rng) {
  std::vector<int> ids;
  ids.push_back(static_cast<int>(rng.index(num_classes)));
  while (ids.size() < n) {
    auto pick = static_cast<int>(rng.index(num_classes - ids.size()));
    std::vector<int> taken = ids;
    std::sort(taken.begin(), taken.end());
    for (int t : taken)
      if (pick >= t) ++pick;
    ids.push_back(pick);
  }
  return ids;
}

}  // namespace detail

// Background for hyp_background prompts: a fixed function of (template, class)
// so the rendered text stays a pure function of the record's identity.
inline const std::string& background_for(const ClassEntry& c, int template_id) {
  const auto h = hash_combine(static_cast<std::uint64_t>(template_id),
                              static_cast<std::uint64_t>(c.id));
  return c.background_pool[h % c.background_pool.size()];
}

inline std::string render_text(PromptStrategy strategy, const std::string& tmpl,
                               const Vocabulary& vocab, const std::vector<int>& ids,
                               int template_id) {
  const auto& first = vocab.at(static_cast<std::size_t>(ids.at(0)));
  switch (strategy) {
    case PromptStrategy::kSingle:
    case PromptStrategy::kMixup:
    case PromptStrategy::kNClass:
      return tmpl + " " + detail::join_labels(vocab, ids);
    case PromptStrategy::kHypernym:
      return tmpl + " " + first.label + ", " + first.hypernym.value();
    case PromptStrategy::kDefinition:
      return tmpl + " " + first.label + ", " + first.definition.value();
    case PromptStrategy::kHypBackground:
      return tmpl + " " + first.label + ", " + first.hypernym.value() + " inside " +
             background_for(first, template_id);
  }
  return {};
}

namespace detail {

template <typename DrawClasses>
std::vector<PromptRecord> generate(const Vocabulary& vocab,
                                   const std::vector<std::string>& templates, std::size_t count,
                                   PromptStrategy strategy, const RngStream& rng,
                                   DrawClasses&& draw_classes) {
  require_pools(vocab, templates);
  if (count < 1) throw ConfigError("prompt count must be at least 1");
  std::vector<PromptRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    RngStream sub = rng.derive(i);
    PromptRecord r;
    r.id = i;
    r.strategy = strategy;
    r.template_id = static_cast<int>(sub.index(templates.size()));
    r.class_ids = draw_classes(sub);
    r.text = render_text(strategy, templates[static_cast<std::size_t>(r.template_id)], vocab,
                         r.class_ids, r.template_id);
    r.seed = sub.next_u64();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

// "{template} {label}" with class and template uniform per record.
inline std::vector<PromptRecord> gen_single_class(const Vocabulary& vocab,
                                                  const std::vector<std::string>& templates,
                                                  std::size_t count, const RngStream& rng) {
  return detail::generate(vocab, templates, count, PromptStrategy::kSingle, rng,
                          [&](RngStream& s) {
                            return std::vector<int>{static_cast<int>(s.index(vocab.size()))};
                          });
}

// Single-class prompts that all name `class_id`; builds per-class synthetic
// sets of a fixed size.
inline std::vector<PromptRecord> gen_single_class_for(const Vocabulary& vocab,
                                                      const std::vector<std::string>& templates,
                                                      int class_id, std::size_t count,
                                                      const RngStream& rng) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= vocab.size())
    throw PreconditionError("unknown class id " + std::to_string(class_id));
  return detail::generate(vocab, templates, count, PromptStrategy::kSingle, rng,
                          [&](RngStream&) { return std::vector<int>{class_id}; });
}

// "{template} {label1} and {label2}"; the second class comes from the pairing
// policy. Pairs are drawn i.i.d. across records.
inline std::vector<PromptRecord> gen_mixup_class(const Vocabulary& vocab,
                                                 const std::vector<std::string>& templates,
                                                 std::size_t count, const PairingPolicy& pairing,
                                                 const RngStream& rng) {
  if (vocab.size() < 2) throw ConfigError("mixup prompts need at least two classes");
  return detail::generate(vocab, templates, count, PromptStrategy::kMixup, rng,
                          [&](RngStream& s) {
                            const auto a = static_cast<int>(s.index(vocab.size()));
                            return std::vector<int>{a, pair_classes(pairing, vocab.size(), a, s)};
                          });
}

inline std::vector<PromptRecord> gen_nclass(const Vocabulary& vocab,
                                            const std::vector<std::string>& templates,
                                            std::size_t count, std::size_t n_classes,
                                            const RngStream& rng) {
  if (n_classes < 2 || n_classes > 4)
    throw ConfigError("n_classes must be in [2, 4], got " + std::to_string(n_classes));
  if (vocab.size() < n_classes)
    throw ConfigError("vocabulary smaller than n_classes");
  return detail::generate(vocab, templates, count, PromptStrategy::kNClass, rng,
                          [&](RngStream& s) {
                            return detail::draw_distinct(vocab.size(), n_classes, s);
                          });
}

// Single-class prompts enriched with class metadata (hypernym, definition, or
// hypernym plus a background from the class's pool).
inline std::vector<PromptRecord> gen_variant(const Vocabulary& vocab,
                                             const std::vector<std::string>& templates,
                                             std::size_t count, PromptStrategy variant,
                                             const RngStream& rng) {
  require(variant == PromptStrategy::kHypernym || variant == PromptStrategy::kDefinition ||
              variant == PromptStrategy::kHypBackground,
          "gen_variant: not a variant strategy");
  detail::require_pools(vocab, templates);
  std::vector<int> missing;
  for (const auto& c : vocab) {
    const bool has_hyp = c.hypernym.has_value() && !c.hypernym->empty();
    bool ok = true;
    if (variant == PromptStrategy::kHypernym) ok = has_hyp;
    if (variant == PromptStrategy::kDefinition) ok = c.definition && !c.definition->empty();
    if (variant == PromptStrategy::kHypBackground) ok = has_hyp && !c.background_pool.empty();
    if (!ok) missing.push_back(c.id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (int id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw ConfigError("classes missing metadata for " + std::string(to_string(variant)) +
                      " prompts: " + ids);
  }
  return detail::generate(vocab, templates, count, variant, rng, [&](RngStream& s) {
    return std::vector<int>{static_cast<int>(s.index(vocab.size()))};
  });
}

}  // namespace dfq::vocab
