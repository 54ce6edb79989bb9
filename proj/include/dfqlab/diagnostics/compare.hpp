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
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/diagnostics/gap.hpp"
#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/quant/quantized_model.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/world/world.hpp"

namespace dfq::diag {

using quant::kNumGroups;

// Outcome of calibrating one model on one strategy's calibration set.
struct StrategyRun {
  std::string strategy;
  std::uint64_t seed = 0;
  std::size_t calibration_size = 0;
  double fp_accuracy = 0.0;
  double accuracy = 0.0;  // quantized top-1 on the real test set
  // Mean over steps of g(t), summed over blocks.
  std::array<double, kNumGroups> mean_grad_sq{};
  double bound = 0.0;
  GapReport gap;         // cross-entropy, headline
  GapReport output_gap;  // output MSE against the FP logits
  std::array<quant::BlockReport, model::kNumBlocks> blocks{};
  // g(t) per step, summed over blocks.
  std::array<std::vector<double>, kNumGroups> trace;
};

// Per-step g(t) of each group summed over blocks; traces may differ in
// length only if they were recorded with different step counts.
inline std::array<std::vector<double>, kNumGroups> summed_trace(
    std::span<const quant::GradTrace> traces) {
  std::array<std::vector<double>, kNumGroups> out;
  for (const auto& tr : traces)
    for (std::size_t g = 0; g < kNumGroups; ++g) {
      if (out[g].size() < tr.steps.size()) out[g].resize(tr.steps.size(), 0.0);
      for (std::size_t t = 0; t < tr.steps.size(); ++t) out[g][t] += tr.steps[t].grad_sq[g];
    }
  return out;
}

template <typename T>
StrategyRun summarize_run(const std::string& strategy, std::uint64_t seed, double fp_accuracy,
                          const quant::QuantizeResult<T>& res, const world::LabeledSet& calibration,
                          const world::LabeledSet& test) {
  StrategyRun r;
  r.strategy = strategy;
  r.seed = seed;
  r.calibration_size = calibration.size();
  r.fp_accuracy = fp_accuracy;
  r.accuracy = quant::eval_quantized(res.model, test);
  for (const auto& tr : res.traces)
    for (auto g : quant::kAllGroups) r.mean_grad_sq[static_cast<std::size_t>(g)] += tr.mean_grad_sq(g);
  r.bound = gap_bound(res.traces, calibration.size());
  r.gap = empirical_gap(res.model, calibration, test, GapLoss::kCrossEntropy);
  r.gap.bound = r.bound;
  r.output_gap = empirical_gap(res.model, calibration, test, GapLoss::kOutputMse);
  r.output_gap.bound = r.bound;
  r.blocks = res.reports;
  r.trace = summed_trace(res.traces);
  return r;
}

enum class Metric { kAccuracy, kGradActScale, kGradWeightRounding, kGradWeightScale, kBound, kGap };

inline constexpr std::array<Metric, 6> kAllMetrics = {
    Metric::kAccuracy, Metric::kGradActScale, Metric::kGradWeightRounding,
    Metric::kGradWeightScale, Metric::kBound, Metric::kGap};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kGradActScale: return "g_act_scale";
    case Metric::kGradWeightRounding: return "g_weight_rounding";
    case Metric::kGradWeightScale: return "g_weight_scale";
    case Metric::kBound: return "bound";
    case Metric::kGap: return "gap";
  }
  return "?";
}

inline double metric_value(const StrategyRun& r, Metric m) {
  switch (m) {
    case Metric::kAccuracy: return r.accuracy;
    case Metric::kGradActScale: return r.mean_grad_sq[0];
    case Metric::kGradWeightRounding: return r.mean_grad_sq[1];
    case Metric::kGradWeightScale: return r.mean_grad_sq[2];
    case Metric::kBound: return r.bound;
    case Metric::kGap: return r.gap.gap;
  }
  return 0.0;
}

struct StrategySummary {
  std::string strategy;
  std::size_t seeds = 0;
  double fp_accuracy = 0.0;
  double accuracy = 0.0;
  std::array<double, kNumGroups> mean_grad_sq{};
  double bound = 0.0;
  double gap = 0.0;
  double output_gap = 0.0;
  std::size_t reverted_blocks = 0;
  std::array<std::vector<double>, kNumGroups> trace;  // mean over seeds
};

// Seed-wise comparison of two strategies on one metric.
struct Ordering {
  std::string a, b;
  Metric metric = Metric::kAccuracy;
  std::size_t a_less = 0, a_greater = 0, ties = 0;
};

struct ComparisonReport {
  std::uint64_t config_hash = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<StrategySummary> summaries;  // in strategy order
  std::vector<StrategyRun> runs;           // strategy-major, then seed order
  std::vector<Ordering> orderings;

  const StrategySummary& summary(const std::string& name) const {
    for (const auto& s : summaries)
      if (s.strategy == name) return s;
    throw PreconditionError("no summary for strategy '" + name + "'");
  }
  const StrategyRun& run(const std::string& name, std::uint64_t seed) const {
    for (const auto& r : runs)
      if (r.strategy == name && r.seed == seed) return r;
    throw PreconditionError("no run for strategy '" + name + "' seed " + std::to_string(seed));
  }
  const Ordering& ordering(const std::string& a, const std::string& b, Metric m) const {
    for (const auto& o : orderings)
      if (o.a == a && o.b == b && o.metric == m) return o;
    throw PreconditionError("no ordering for " + a + " vs " + b);
  }
};

// Aggregates runs into per-strategy means and pairwise per-seed win counts.
// `strategies` fixes the row order; every strategy must have a run for
// every seed.
inline ComparisonReport compare_strategies(const std::vector<std::string>& strategies,
                                           const std::vector<std::uint64_t>& seeds,
                                           std::vector<StrategyRun> runs,
                                           std::uint64_t config_hash = 0) {
  if (strategies.empty() || seeds.empty())
    throw PreconditionError("compare_strategies: need strategies and seeds");
  ComparisonReport rep;
  rep.config_hash = config_hash;
  rep.seeds = seeds;
  std::map<std::pair<std::string, std::uint64_t>, const StrategyRun*> index;
  for (const auto& r : runs) index[{r.strategy, r.seed}] = &r;
  auto find = [&](const std::string& s, std::uint64_t seed) -> const StrategyRun& {
    const auto it = index.find({s, seed});
    if (it == index.end())
      throw PreconditionError("compare_strategies: missing run for " + s + " seed " +
                              std::to_string(seed));
    return *it->second;
  };

  std::vector<StrategyRun> ordered;
  std::vector<std::string> unique;
  for (const auto& s : strategies) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
    StrategySummary sum;
    sum.strategy = s;
    sum.seeds = seeds.size();
    const double inv = 1.0 / static_cast<double>(seeds.size());
    for (auto seed : seeds) {
      const auto& r = find(s, seed);
      ordered.push_back(r);
      sum.fp_accuracy += r.fp_accuracy * inv;
      sum.accuracy += r.accuracy * inv;
      for (std::size_t g = 0; g < kNumGroups; ++g) {
        sum.mean_grad_sq[g] += r.mean_grad_sq[g] * inv;
        if (sum.trace[g].size() < r.trace[g].size()) sum.trace[g].resize(r.trace[g].size(), 0.0);
        for (std::size_t t = 0; t < r.trace[g].size(); ++t) sum.trace[g][t] += r.trace[g][t] * inv;
      }
      sum.bound += r.bound * inv;
      sum.gap += r.gap.gap * inv;
      sum.output_gap += r.output_gap.gap * inv;
      for (const auto& b : r.blocks) sum.reverted_blocks += b.reverted;
    }
    rep.summaries.push_back(std::move(sum));
  }
  for (std::size_t i = 0; i < unique.size(); ++i)
    for (std::size_t j = i + 1; j < unique.size(); ++j)
      for (auto m : kAllMetrics) {
        Ordering o{unique[i], unique[j], m};
        for (auto seed : seeds) {
          const double va = metric_value(find(unique[i], seed), m);
          const double vb = metric_value(find(unique[j], seed), m);
          if (va < vb) ++o.a_less;
          else if (va > vb) ++o.a_greater;
          else ++o.ties;
        }
        rep.orderings.push_back(o);
      }
  rep.runs = std::move(ordered);
  return rep;
}

inline void write_summary_csv(std::ostream& os, const ComparisonReport& rep) {
  using quant::format_double;
  os << "strategy,seeds,fp_accuracy,accuracy,g_act_scale,g_weight_rounding,g_weight_scale,"
        "bound,gap,output_gap,reverted_blocks\n";
  for (const auto& s : rep.summaries) {
    os << s.strategy << ',' << s.seeds << ',' << format_double(s.fp_accuracy) << ','
       << format_double(s.accuracy);
    for (double g : s.mean_grad_sq) os << ',' << format_double(g);
    os << ',' << format_double(s.bound) << ',' << format_double(s.gap) << ','
       << format_double(s.output_gap) << ',' << s.reverted_blocks << '\n';
  }
}

inline void write_runs_csv(std::ostream& os, const ComparisonReport& rep) {
  using quant::format_double;
  os << "strategy,seed,calibration_size,fp_accuracy,accuracy,g_act_scale,g_weight_rounding,"
        "g_weight_scale,bound,calibration_loss,test_loss,gap,output_gap\n";
  for (const auto& r : rep.runs) {
    os << r.strategy << ',' << r.seed << ',' << r.calibration_size << ','
       << format_double(r.fp_accuracy) << ',' << format_double(r.accuracy);
    for (double g : r.mean_grad_sq) os << ',' << format_double(g);
    os << ',' << format_double(r.bound) << ',' << format_double(r.gap.calibration_loss) << ','
       << format_double(r.gap.test_loss) << ',' << format_double(r.gap.gap) << ','
       << format_double(r.output_gap.gap) << '\n';
  }
}

inline void write_orderings_csv(std::ostream& os, const ComparisonReport& rep) {
  os << "a,b,metric,a_less,a_greater,ties\n";
  for (const auto& o : rep.orderings)
    os << o.a << ',' << o.b << ',' << to_string(o.metric) << ',' << o.a_less << ','
       << o.a_greater << ',' << o.ties << '\n';
}

inline nlohmann::ordered_json to_json(const GapReport& g) {
  nlohmann::ordered_json j;
  j["loss"] = std::string(to_string(g.loss));
  j["provenance"] = g.provenance;
  j["calibration_loss"] = g.calibration_loss;
  j["test_loss"] = g.test_loss;
  j["gap"] = g.gap;
  j["bound"] = g.bound;
  return j;
}

inline nlohmann::ordered_json groups_json(const std::array<double, kNumGroups>& v) {
  nlohmann::ordered_json j;
  for (auto g : quant::kAllGroups) j[std::string(quant::to_string(g))] = v[static_cast<std::size_t>(g)];
  return j;
}

inline nlohmann::ordered_json to_json(const StrategyRun& r) {
  nlohmann::ordered_json j;
  j["strategy"] = r.strategy;
  j["seed"] = r.seed;
  j["calibration_size"] = r.calibration_size;
  j["fp_accuracy"] = r.fp_accuracy;
  j["accuracy"] = r.accuracy;
  j["mean_grad_sq"] = groups_json(r.mean_grad_sq);
  j["bound"] = r.bound;
  j["gap"] = to_json(r.gap);
  j["output_gap"] = to_json(r.output_gap);
  auto& blocks = j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : r.blocks)
    blocks.push_back({{"init_mse", b.init_mse}, {"final_mse", b.final_mse}, {"reverted", b.reverted}});
  return j;
}

inline StrategyRun run_from_json(const nlohmann::json& j) {
  StrategyRun r;
  auto gap = [](const nlohmann::json& g) {
    GapReport out;
    out.loss = g.at("loss").get<std::string>() == "cross_entropy" ? GapLoss::kCrossEntropy
                                                                  : GapLoss::kOutputMse;
    out.provenance = g.at("provenance").get<std::string>();
    out.calibration_loss = g.at("calibration_loss").get<double>();
    out.test_loss = g.at("test_loss").get<double>();
    out.gap = g.at("gap").get<double>();
    out.bound = g.at("bound").get<double>();
    return out;
  };
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.calibration_size = j.at("calibration_size").get<std::size_t>();
    r.fp_accuracy = j.at("fp_accuracy").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    for (auto g : quant::kAllGroups)
      r.mean_grad_sq[static_cast<std::size_t>(g)] =
          j.at("mean_grad_sq").at(std::string(quant::to_string(g))).get<double>();
    r.bound = j.at("bound").get<double>();
    r.gap = gap(j.at("gap"));
    r.output_gap = gap(j.at("output_gap"));
    const auto& blocks = j.at("blocks");
    if (blocks.size() != r.blocks.size()) throw ParseError("run record: wrong block count");
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      r.blocks[b].init_mse = blocks[b].at("init_mse").get<double>();
      r.blocks[b].final_mse = blocks[b].at("final_mse").get<double>();
      r.blocks[b].reverted = blocks[b].at("reverted").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
  return r;
}

inline nlohmann::ordered_json to_json(const ComparisonReport& rep) {
  nlohmann::ordered_json j;
  j["config_hash"] = rep.config_hash;
  j["seeds"] = rep.seeds;
  auto& sums = j["strategies"] = nlohmann::ordered_json::array();
  for (const auto& s : rep.summaries) {
    nlohmann::ordered_json o;
    o["strategy"] = s.strategy;
    o["seeds"] = s.seeds;
    o["fp_accuracy"] = s.fp_accuracy;
    o["accuracy"] = s.accuracy;
    o["mean_grad_sq"] = groups_json(s.mean_grad_sq);
    o["bound"] = s.bound;
    o["gap"] = s.gap;
    o["output_gap"] = s.output_gap;
    o["reverted_blocks"] = s.reverted_blocks;
    sums.push_back(std::move(o));
  }
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : rep.runs) runs.push_back(to_json(r));
  auto& ords = j["orderings"] = nlohmann::ordered_json::array();
  for (const auto& o : rep.orderings)
    ords.push_back({{"a", o.a},
                    {"b", o.b},
                    {"metric", std::string(to_string(o.metric))},
                    {"a_less", o.a_less},
                    {"a_greater", o.a_greater},
                    {"ties", o.ties}});
  return j;
}

// Two-column "step value" data for one trace, gnuplot-compatible.
inline void write_plot_data(std::ostream& os, std::span<const double> trace,
                            const std::string& title) {
  os << "# " << title << "\n# step value\n";
  for (std::size_t t = 0; t < trace.size(); ++t)
    os << t << ' ' << quant::format_double(trace[t]) << '\n';
}

}  // namespace dfq::diag
