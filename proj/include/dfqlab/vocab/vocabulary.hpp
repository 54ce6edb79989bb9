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
#include <optional>
#include <string>
#include <vector>

#include "dfqlab/error.hpp"

namespace dfq::vocab {

struct Meaning {
  int id = 0;
  bool in_distribution = true;
  std::string description;
};

// One class of the label space. A polysemous label carries extra meanings the
// generator may render instead of the in-distribution one.
struct ClassEntry {
  int id = 0;
  std::string label;
  std::optional<std::string> hypernym;
  std::optional<std::string> definition;
  std::vector<std::string> background_pool;
  std::vector<Meaning> meanings{Meaning{}};
  double polysemy_bias = 0.0;

  int in_distribution_meaning() const {
    for (const auto& m : meanings)
      if (m.in_distribution) return m.id;
    throw ConfigError("class '" + label + "' has no in-distribution meaning");
  }
  std::vector<int> off_distribution_meanings() const {
    std::vector<int> out;
    for (const auto& m : meanings)
      if (!m.in_distribution) out.push_back(m.id);
    return out;
  }
};

inline void validate(const ClassEntry& c) {
  int in_dist = 0;
  for (const auto& m : c.meanings) in_dist += m.in_distribution ? 1 : 0;
  if (in_dist != 1)
    throw ConfigError("class '" + c.label +
                      "' must have exactly one in-distribution meaning");
  if (!(c.polysemy_bias >= 0.0 && c.polysemy_bias <= 1.0))
    throw ConfigError("class '" + c.label + "' polysemy_bias outside [0, 1]");
  if (c.polysemy_bias == 0.0 && c.meanings.size() != 1)
    throw ConfigError("class '" + c.label +
                      "' has polysemy_bias 0 but more than one meaning");
  if (c.polysemy_bias > 0.0 && c.meanings.size() < 2)
    throw ConfigError("class '" + c.label +
                      "' has polysemy_bias > 0 but no alternative meaning");
}

using Vocabulary = std::vector<ClassEntry>;

inline void validate(const Vocabulary& v) {
  if (v.empty()) throw ConfigError("vocabulary is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].id != static_cast<int>(i))
      throw ConfigError("vocabulary ids must be 0..K-1 in order");
    validate(v[i]);
  }
}

inline ClassEntry make_class(int id, std::string label, std::string hypernym,
                             std::string definition,
                             std::vector<std::string> backgrounds,
                             double polysemy_bias = 0.0,
                             std::string alt_meaning = {}) {
  ClassEntry c;
  c.id = id;
  c.label = std::move(label);
  c.hypernym = std::move(hypernym);
  c.definition = std::move(definition);
  c.background_pool = std::move(backgrounds);
  c.polysemy_bias = polysemy_bias;
  c.meanings = {Meaning{0, true, "intended"}};
  if (polysemy_bias > 0.0) c.meanings.push_back(Meaning{1, false, std::move(alt_meaning)});
  return c;
}

// Ten-class desk vocabulary. "kite" and "crane" are polysemous: the generator
// mostly renders their out-of-distribution sense (toy kite, construction
// crane) when prompted with the bare label.
inline Vocabulary default_vocabulary(double polysemy_bias = 0.8) {
  return {
      make_class(0, "kite", "bird of prey", "a small hawk with long wings and a forked tail",
                 {"sky", "tree", "field"}, polysemy_bias, "toy kite on a string"),
      make_class(1, "bald eagle", "bird of prey", "a large eagle with a white head and tail",
                 {"sky", "lake", "cliff"}),
      make_class(2, "vulture", "bird of prey", "a large scavenging bird with a bare head",
                 {"desert", "sky", "carcass"}),
      make_class(3, "tench", "cyprinid", "a freshwater dace-like game fish",
                 {"river", "pond", "net"}),
      make_class(4, "goldfish", "cyprinid", "a small golden carp kept in ponds and aquariums",
                 {"aquarium", "pond", "bowl"}),
      make_class(5, "crane", "wading bird", "a large long-necked wading bird",
                 {"marsh", "field", "river"}, polysemy_bias, "construction crane"),
      make_class(6, "great white shark", "shark", "a large aggressive shark of warm seas",
                 {"ocean", "reef", "surface"}),
      make_class(7, "tree frog", "frog", "an arboreal frog with adhesive toe pads",
                 {"leaf", "branch", "rainforest"}),
      make_class(8, "box turtle", "turtle", "a land turtle able to close its shell",
                 {"forest floor", "grass", "log"}),
      make_class(9, "king penguin", "penguin", "a large penguin with orange neck patches",
                 {"ice", "beach", "colony"}),
  };
}

// CLIP-style templates. The pool is overridable from the experiment config.
inline std::vector<std::string> default_templates() {
  return {
      "a realistic photo of",
      "a photo of",
      "a cropped photo of",
      "a close-up photo of",
      "a bright photo of",
      "a good photo of",
      "a photo of the small",
      "a photo of the large",
  };
}

}  // namespace dfq::vocab
