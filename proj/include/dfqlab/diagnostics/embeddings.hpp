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

#include <ostream>
#include <string>
#include <vector>

#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::diag {

struct TaggedSet {
  std::string tag;
  const world::LabeledSet* set = nullptr;
};

// One row per sample: set,class_ids,f0..f{d-1}. Class ids of mixed samples
// are joined with ';'.
template <typename T>
void export_embeddings(std::ostream& os, const model::ModelSpec& spec,
                       const model::ModelParams<T>& params, const std::vector<TaggedSet>& sets) {
  os << "set,class_ids";
  for (std::size_t j = 0; j < spec.d_feat; ++j) os << ",f" << j;
  os << '\n';
  for (const auto& ts : sets) {
    require(ts.set != nullptr, "export_embeddings: null set");
    if (ts.tag.find_first_of(",\n\"") != std::string::npos)
      throw PreconditionError("export_embeddings: set tag '" + ts.tag + "' is not CSV-safe");
    if (ts.set->size() == 0) continue;
    const auto f = model::extract_features(spec, params, ts.set->images);
    for (std::size_t i = 0; i < ts.set->size(); ++i) {
      os << ts.tag << ',';
      const auto& ids = ts.set->class_ids[i];
      for (std::size_t k = 0; k < ids.size(); ++k) os << (k ? ";" : "") << ids[k];
      for (std::size_t j = 0; j < f.dim(1); ++j)
        os << ',' << quant::format_double(static_cast<double>(f(i, j)));
      os << '\n';
    }
  }
}

}  // namespace dfq::diag
