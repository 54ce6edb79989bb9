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

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/diagnostics/fid.hpp"
#include "dfqlab/diagnostics/strategy.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/vocab/prompts.hpp"
#include "dfqlab/world/world.hpp"

// Per-class RPC-FID of single-class synthetic data against real data, with
// the reference model's penultimate layer as the feature extractor.
namespace dfq::diag {

// Single-class prompts, `per_class` for every class, in class order.
inline std::vector<vocab::PromptRecord> rpcfid_prompts(const vocab::Vocabulary& vocab,
                                                       const std::vector<std::string>& templates,
                                                       std::size_t per_class, std::uint64_t seed) {
  const RngStream rng(seed, streams::kRpcFid);
  std::vector<vocab::PromptRecord> out;
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    auto part = vocab::gen_single_class_for(vocab, templates, static_cast<int>(k), per_class,
                                            rng.derive(k));
    for (auto& r : part) {
      r.id = out.size();
      out.push_back(std::move(r));
    }
  }
  return out;
}

// Real samples for the denominator and numerator: 2 * half per class.
inline world::LabeledSet rpcfid_real_set(const world::World& w, std::size_t half,
                                         std::uint64_t seed) {
  return world::sample_real_balanced(w, 2 * half, RngStream(seed, streams::kRpcFidData));
}

// Rows of `set` whose first class id is k, for every k < num_classes.
inline std::vector<std::vector<std::size_t>> rows_by_class(const world::LabeledSet& set,
                                                           std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> out(num_classes);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int c = set.class_ids[i].at(0);
    require(c >= 0 && static_cast<std::size_t>(c) < num_classes, "rows_by_class: bad class id");
    out[static_cast<std::size_t>(c)].push_back(i);
  }
  return out;
}

template <typename T>
std::vector<RpcFidRow> rpc_fid_by_class(const model::ModelSpec& spec,
                                        const model::ModelParams<T>& params,
                                        const world::LabeledSet& real,
                                        const world::LabeledSet& synthetic, std::size_t half,
                                        std::size_t resamples, std::uint64_t seed) {
  const std::size_t k = spec.num_classes;
  const auto fr = model::extract_features(spec, params, real.images);
  const auto fs = model::extract_features(spec, params, synthetic.images);
  const auto real_rows = rows_by_class(real, k);
  const auto syn_rows = rows_by_class(synthetic, k);
  const RngStream rng(seed, streams::kRpcFid + 1);
  std::vector<RpcFidRow> rows;
  for (std::size_t c = 0; c < k; ++c) {
    auto pick = [](const Tensor<T>& f, const std::vector<std::size_t>& idx) {
      Tensor<T> out({idx.size(), f.dim(1)});
      for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(f.row(idx[i]).begin(), f.row(idx[i]).end(), out.row(i).begin());
      return out;
    };
    if (real_rows[c].size() < 2 * half || syn_rows[c].size() < half)
      throw PreconditionError("rpc_fid: class " + std::to_string(c) + " has " +
                              std::to_string(real_rows[c].size()) + " real and " +
                              std::to_string(syn_rows[c].size()) + " synthetic samples; need " +
                              std::to_string(2 * half) + " and " + std::to_string(half));
    rows.push_back(rpc_fid(pick(fr, real_rows[c]), pick(fs, syn_rows[c]), half, resamples,
                           rng.derive(c), static_cast<int>(c)));
  }
  return rows;
}

inline void write_rpcfid_csv(std::ostream& os, const std::vector<RpcFidRow>& rows,
                             std::uint64_t seed) {
  using quant::format_double;
  os << "seed,class_id,numerator,denominator,rpc_fid,real_count,synthetic_count,half,resamples\n";
  for (const auto& r : rows)
    os << seed << ',' << r.class_id << ',' << format_double(r.numerator) << ','
       << format_double(r.denominator) << ',' << format_double(r.rpc_fid) << ',' << r.real_count
       << ',' << r.synthetic_count << ',' << r.half << ',' << r.resamples << '\n';
}

inline nlohmann::ordered_json to_json(const RpcFidRow& r) {
  return {{"class_id", r.class_id},       {"numerator", r.numerator},
          {"denominator", r.denominator}, {"rpc_fid", r.rpc_fid},
          {"real_count", r.real_count},   {"synthetic_count", r.synthetic_count},
          {"half", r.half},               {"resamples", r.resamples}};
}

}  // namespace dfq::diag
