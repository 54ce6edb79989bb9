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
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dfqlab/cli/config.hpp"
#include "dfqlab/cli/run_manifest.hpp"
#include "dfqlab/diagnostics/compare.hpp"
#include "dfqlab/diagnostics/embeddings.hpp"
#include "dfqlab/diagnostics/polysemy.hpp"
#include "dfqlab/diagnostics/strategy.hpp"
#include "dfqlab/model/checkpoint.hpp"
#include "dfqlab/model/train.hpp"
#include "dfqlab/quant/quantized_model.hpp"
#include "dfqlab/quant/trace.hpp"
#include "dfqlab/vocab/manifest.hpp"
#include "dfqlab/world/labeled_set_io.hpp"

// Staged experiment pipeline over out/<config-hash>/<stage>/.
//
//   train-ref    reference model, training log and real test set per seed
//   gen-prompts  prompt manifests per prompt-based strategy and seed
//   synth        calibration sets and the RPC-FID sample sets
//   calibrate    quantized checkpoint, gradient trace and metrics per run
//   gradtrace    mean g(t) traces as plot data
//   rpcfid       per-class RPC-FID tables
//   compare      strategy comparison (CSV + JSON)
//   report       merged report and feature embeddings
namespace dfq::cli {

enum class Stage { kTrainRef, kGenPrompts, kSynth, kCalibrate, kGradTrace, kRpcFid, kCompare, kReport };

inline constexpr std::array<Stage, 8> kAllStages = {
    Stage::kTrainRef,  Stage::kGenPrompts, Stage::kSynth,   Stage::kCalibrate,
    Stage::kGradTrace, Stage::kRpcFid,     Stage::kCompare, Stage::kReport};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kTrainRef: return "train-ref";
    case Stage::kGenPrompts: return "gen-prompts";
    case Stage::kSynth: return "synth";
    case Stage::kCalibrate: return "calibrate";
    case Stage::kGradTrace: return "gradtrace";
    case Stage::kRpcFid: return "rpcfid";
    case Stage::kCompare: return "compare";
    case Stage::kReport: return "report";
  }
  return "?";
}

struct RunOptions {
  bool force = false;
  std::size_t jobs = 1;
  std::ostream* log = &std::cerr;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Every exception is
// caught; the one from the lowest index is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, const std::filesystem::path& out_base, RunOptions opts = {})
      : cfg_(std::move(cfg)),
        hash_(config_hash(cfg_)),
        root_(out_base / hex64(hash_)),
        opts_(opts) {
    validate(cfg_);
    for (const auto& s : cfg_.strategies)
      if (std::find(strategies_.begin(), strategies_.end(), s) == strategies_.end())
        strategies_.push_back(s);
  }

  const std::filesystem::path& root() const { return root_; }
  std::uint64_t hash() const { return hash_; }
  const ExperimentConfig& config() const { return cfg_; }

  static std::vector<Stage> dependencies(Stage s, const ExperimentConfig& cfg) {
    switch (s) {
      case Stage::kTrainRef: return {};
      case Stage::kGenPrompts: {
        for (const auto& name : cfg.strategies)
          if (diag::parse_strategy(name).needs_model()) return {Stage::kTrainRef};
        return {};
      }
      case Stage::kSynth: return {Stage::kGenPrompts};
      case Stage::kCalibrate: return {Stage::kTrainRef, Stage::kSynth};
      case Stage::kGradTrace: return {Stage::kCalibrate};
      case Stage::kRpcFid: return {Stage::kTrainRef, Stage::kSynth};
      case Stage::kCompare: return {Stage::kCalibrate};
      case Stage::kReport: return {Stage::kCompare, Stage::kGradTrace, Stage::kRpcFid};
    }
    return {};
  }

  // Runs one stage. Upstream stages must already be complete and intact.
  void run_stage(Stage s) {
    DirectoryLock lock(root_);
    RunManifest m = open_manifest();
    execute(s, m, opts_.force);
  }

  // Runs `s` and everything it depends on, skipping completed stages.
  void run_through(Stage s) {
    DirectoryLock lock(root_);
    RunManifest m = open_manifest();
    std::vector<Stage> order;
    std::function<void(Stage)> visit = [&](Stage x) {
      if (std::find(order.begin(), order.end(), x) != order.end()) return;
      for (auto d : dependencies(x, cfg_)) visit(d);
      order.push_back(x);
    };
    visit(s);
    for (auto x : order) execute(x, m, opts_.force);
  }

 private:
  using Clock = std::chrono::steady_clock;

  RunManifest open_manifest() {
    std::filesystem::create_directories(root_);
    RunManifest m = RunManifest::open(root_, hash_);
    const auto cfg_path = root_ / "config.json";
    if (!std::filesystem::exists(cfg_path)) {
      std::ofstream os(cfg_path, std::ios::binary);
      os << to_json(cfg_).dump(2) << '\n';
    }
    return m;
  }

  void log(const std::string& msg) {
    std::lock_guard<std::mutex> g(log_mutex_);
    if (opts_.log) *opts_.log << "[dfqlab] " << msg << std::endl;
  }

  void execute(Stage s, RunManifest& m, bool force) {
    const std::string name(to_string(s));
    // Upstream is checked even when this stage is up to date.
    for (auto d : dependencies(s, cfg_)) m.verify(std::string(to_string(d)));
    if (m.complete(name) && !force) {
      m.verify(name);
      log(name + ": up to date, skipped");
      return;
    }
    const auto t0 = Clock::now();
    log(name + ": running");
    std::filesystem::create_directories(root_ / name);
    std::vector<std::string> artifacts;
    switch (s) {
      case Stage::kTrainRef: artifacts = train_ref(); break;
      case Stage::kGenPrompts: artifacts = gen_prompts(); break;
      case Stage::kSynth: artifacts = synth(); break;
      case Stage::kCalibrate: artifacts = calibrate(); break;
      case Stage::kGradTrace: artifacts = gradtrace(); break;
      case Stage::kRpcFid: artifacts = rpcfid(); break;
      case Stage::kCompare: artifacts = compare(); break;
      case Stage::kReport: artifacts = report(); break;
    }
    // Anything downstream was built from the previous outputs.
    for (auto later : kAllStages) {
      const auto deps = transitive_dependencies(later);
      if (deps.count(s)) m.invalidate(std::string(to_string(later)));
    }
    m.mark_complete(name, artifacts);
    m.save();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::ostringstream msg;
    msg << name << ": done in " << std::fixed << std::setprecision(1) << secs << " s";
    log(msg.str());
  }

  std::set<Stage> transitive_dependencies(Stage s) const {
    std::set<Stage> out;
    std::function<void(Stage)> visit = [&](Stage x) {
      for (auto d : dependencies(x, cfg_))
        if (out.insert(d).second) visit(d);
    };
    visit(s);
    return out;
  }

  // ---- paths -------------------------------------------------------------

  static std::string seed_tag(std::uint64_t seed) { return "_s" + std::to_string(seed); }
  static std::string checkpoint_rel(std::uint64_t seed) {
    return "train-ref/model" + seed_tag(seed) + ".ckpt";
  }
  static std::string test_rel(std::uint64_t seed) { return "train-ref/test" + seed_tag(seed); }
  static std::string train_log_rel(std::uint64_t seed) {
    return "train-ref/log" + seed_tag(seed) + ".json";
  }
  static std::string prompts_rel(diag::Source src, std::uint64_t seed) {
    return "gen-prompts/" + std::string(diag::to_string(src)) + seed_tag(seed) + ".jsonl";
  }
  static std::string rpcfid_prompts_rel(std::uint64_t seed) {
    return "gen-prompts/rpcfid_single" + seed_tag(seed) + ".jsonl";
  }
  static std::string calib_rel(const std::string& strategy, std::uint64_t seed) {
    return "synth/" + strategy + seed_tag(seed);
  }
  static std::string rpcfid_real_rel(std::uint64_t seed) {
    return "synth/rpcfid_real" + seed_tag(seed);
  }
  static std::string rpcfid_syn_rel(std::uint64_t seed) {
    return "synth/rpcfid_single" + seed_tag(seed);
  }
  static std::string run_rel(const std::string& strategy, std::uint64_t seed) {
    return "calibrate/" + strategy + seed_tag(seed);
  }

  std::string abs(const std::string& rel) const { return (root_ / rel).string(); }

  model::ModelParams<float> load_model(std::uint64_t seed) const {
    return model::load_checkpoint<float>(abs(checkpoint_rel(seed)), cfg_.model_for(seed));
  }

  double fp_accuracy(std::uint64_t seed) const {
    std::ifstream is(abs(train_log_rel(seed)), std::ios::binary);
    if (!is) throw MissingArtifactError("missing artifact: " + abs(train_log_rel(seed)));
    try {
      return nlohmann::json::parse(is).at("test_accuracy").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("training log: ") + e.what());
    }
  }

  // ---- stages ------------------------------------------------------------

  std::vector<std::string> train_ref() {
    const auto& seeds = cfg_.seeds;
    parallel_for(seeds.size(), opts_.jobs, [&](std::size_t i) {
      const auto seed = seeds[i];
      const world::World w(cfg_.world_for(seed));
      const auto train = world::sample_real_balanced(w, cfg_.data.train_per_class,
                                                     RngStream(seed, diag::streams::kTrainData));
      const auto test = world::sample_real_balanced(w, cfg_.data.test_per_class,
                                                    RngStream(seed, diag::streams::kTestData));
      const auto spec = cfg_.model_for(seed);
      const auto res = model::train_reference<float>(spec, train, test, cfg_.train,
                                                     RngStream(seed, diag::streams::kTraining));
      model::save_checkpoint(abs(checkpoint_rel(seed)), spec, res.params, seed);
      world::save_labeled_set(abs(test_rel(seed)), test, {world::config_hash(w.spec()), seed});
      nlohmann::ordered_json j;
      j["seed"] = seed;
      j["test_accuracy"] = res.test_accuracy;
      auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
      for (const auto& e : res.log)
        epochs.push_back({{"epoch", e.epoch},
                          {"mean_loss", e.mean_loss},
                          {"train_accuracy", e.train_accuracy}});
      std::ofstream os(abs(train_log_rel(seed)), std::ios::binary);
      os << j.dump(2) << '\n';
      std::ostringstream msg;
      msg << "train-ref: seed " << seed << " FP test accuracy " << std::fixed
          << std::setprecision(4) << res.test_accuracy;
      log(msg.str());
    });
    std::vector<std::string> out;
    for (auto seed : seeds) {
      out.push_back(checkpoint_rel(seed));
      out.push_back(test_rel(seed) + ".dfqt");
      out.push_back(test_rel(seed) + ".json");
      out.push_back(train_log_rel(seed));
    }
    return out;
  }

  std::vector<diag::Source> prompt_sources() const {
    std::vector<diag::Source> out;
    for (const auto& name : strategies_) {
      const auto st = diag::parse_strategy(name);
      if (st.uses_prompts() && std::find(out.begin(), out.end(), st.source) == out.end())
        out.push_back(st.source);
    }
    return out;
  }

  std::vector<std::string> gen_prompts() {
    const auto vocab = cfg_.vocabulary();
    std::vector<std::string> out;
    for (auto seed : cfg_.seeds) {
      std::optional<TensorD> vectors;
      for (auto src : prompt_sources()) {
        if (diag::Strategy{src, {}}.needs_model() && !vectors)
          vectors = diag::class_vectors(load_model(seed));
        const auto records = diag::generate_prompts(src, vocab, cfg_.templates,
                                                    cfg_.calibration_size, seed, vectors);
        vocab::save_manifest(abs(prompts_rel(src, seed)), records);
        out.push_back(prompts_rel(src, seed));
      }
      const auto rp = diag::rpcfid_prompts(vocab, cfg_.templates, cfg_.rpcfid.half, seed);
      vocab::save_manifest(abs(rpcfid_prompts_rel(seed)), rp);
      out.push_back(rpcfid_prompts_rel(seed));
    }
    return out;
  }

  std::vector<std::string> synth() {
    std::vector<std::string> out;
    const auto& seeds = cfg_.seeds;
    parallel_for(seeds.size(), opts_.jobs, [&](std::size_t i) {
      const auto seed = seeds[i];
      const world::World w(cfg_.world_for(seed));
      const world::SetMetadata meta{world::config_hash(w.spec()), seed};
      for (const auto& name : strategies_) {
        const auto st = diag::parse_strategy(name);
        world::LabeledSet set =
            st.uses_prompts()
                ? world::render_manifest(w, vocab::load_manifest(abs(prompts_rel(st.source, seed))))
                : diag::real_calibration_set(w, cfg_.calibration_size, seed);
        if (st.augment) set = diag::apply_augment(set, *st.augment, seed);
        world::save_labeled_set(abs(calib_rel(name, seed)), set, meta);
      }
      world::save_labeled_set(abs(rpcfid_real_rel(seed)),
                              diag::rpcfid_real_set(w, cfg_.rpcfid.half, seed), meta);
      world::save_labeled_set(abs(rpcfid_syn_rel(seed)),
                              world::render_manifest(
                                  w, vocab::load_manifest(abs(rpcfid_prompts_rel(seed)))),
                              meta);
    });
    for (auto seed : seeds) {
      for (const auto& name : strategies_) {
        out.push_back(calib_rel(name, seed) + ".dfqt");
        out.push_back(calib_rel(name, seed) + ".json");
      }
      for (const auto& rel : {rpcfid_real_rel(seed), rpcfid_syn_rel(seed)}) {
        out.push_back(rel + ".dfqt");
        out.push_back(rel + ".json");
      }
    }
    return out;
  }

  std::vector<std::string> calibrate() {
    struct Unit {
      std::string strategy;
      std::uint64_t seed;
    };
    std::vector<Unit> units;
    for (auto seed : cfg_.seeds)
      for (const auto& name : strategies_) units.push_back({name, seed});
    parallel_for(units.size(), opts_.jobs, [&](std::size_t i) {
      const auto& u = units[i];
      const auto spec = cfg_.model_for(u.seed);
      const auto fp = load_model(u.seed);
      const auto test = world::load_labeled_set(abs(test_rel(u.seed)));
      const auto calib = world::load_labeled_set(abs(calib_rel(u.strategy, u.seed)));
      const auto t0 = Clock::now();
      const auto res = quant::quantize_model<float>(spec, fp, calib.images, cfg_.quant,
                                                    RngStream(u.seed, diag::streams::kQuant));
      const auto run = diag::summarize_run(u.strategy, u.seed, fp_accuracy(u.seed), res, calib, test);
      const std::string stem = abs(run_rel(u.strategy, u.seed));
      quant::save_quantized(stem + ".qckpt", res.model, u.seed);
      {
        std::ofstream os(stem + "_trace.csv", std::ios::binary);
        quant::write_trace_csv(os, std::vector<quant::GradTrace>(res.traces.begin(), res.traces.end()));
      }
      {
        std::ofstream os(stem + ".json", std::ios::binary);
        os << diag::to_json(run).dump(2) << '\n';
      }
      std::ostringstream msg;
      msg << "calibrate: " << u.strategy << " seed " << u.seed << " W" << cfg_.quant.weight_bits
          << "A" << cfg_.quant.act_bits << " top-1 " << std::fixed << std::setprecision(4)
          << run.accuracy << " (" << std::setprecision(1)
          << std::chrono::duration<double>(Clock::now() - t0).count() << " s)";
      log(msg.str());
    });
    std::vector<std::string> out;
    for (const auto& u : units) {
      const auto stem = run_rel(u.strategy, u.seed);
      out.push_back(stem + ".qckpt");
      out.push_back(stem + "_trace.csv");
      out.push_back(stem + ".json");
    }
    return out;
  }

  std::vector<quant::GradTrace> load_traces(const std::string& strategy, std::uint64_t seed) const {
    const auto path = abs(run_rel(strategy, seed)) + "_trace.csv";
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("missing artifact: " + path);
    return quant::read_trace_csv(is);
  }

  std::vector<std::string> gradtrace() {
    std::vector<std::string> out;
    std::ofstream sum(abs("gradtrace/summary.csv"), std::ios::binary);
    sum << "strategy,seed,block,group,mean_grad_sq,bound_integrand\n";
    for (const auto& name : strategies_) {
      std::array<std::vector<double>, quant::kNumGroups> mean;
      const double inv = 1.0 / static_cast<double>(cfg_.seeds.size());
      for (auto seed : cfg_.seeds) {
        const auto traces = load_traces(name, seed);
        for (const auto& tr : traces)
          for (auto g : quant::kAllGroups)
            sum << name << ',' << seed << ',' << tr.block << ',' << quant::to_string(g) << ','
                << quant::format_double(tr.mean_grad_sq(g)) << ','
                << quant::format_double(diag::bound_integrand(tr, g)) << '\n';
        const auto summed = diag::summed_trace(traces);
        for (std::size_t g = 0; g < quant::kNumGroups; ++g) {
          if (mean[g].size() < summed[g].size()) mean[g].resize(summed[g].size(), 0.0);
          for (std::size_t t = 0; t < summed[g].size(); ++t) mean[g][t] += summed[g][t] * inv;
        }
      }
      for (auto g : quant::kAllGroups) {
        const std::string rel =
            "gradtrace/" + name + "_" + std::string(quant::to_string(g)) + ".dat";
        std::ofstream os(abs(rel), std::ios::binary);
        diag::write_plot_data(os, mean[static_cast<std::size_t>(g)],
                              name + " " + std::string(quant::to_string(g)) +
                                  ": g(t) summed over blocks, mean over seeds");
        out.push_back(rel);
      }
    }
    sum.close();
    out.push_back("gradtrace/summary.csv");
    return out;
  }

  std::vector<std::string> rpcfid() {
    std::vector<std::vector<diag::RpcFidRow>> rows(cfg_.seeds.size());
    parallel_for(cfg_.seeds.size(), opts_.jobs, [&](std::size_t i) {
      const auto seed = cfg_.seeds[i];
      const auto real = world::load_labeled_set(abs(rpcfid_real_rel(seed)));
      const auto syn = world::load_labeled_set(abs(rpcfid_syn_rel(seed)));
      rows[i] = diag::rpc_fid_by_class(cfg_.model_for(seed), load_model(seed), real, syn,
                                       cfg_.rpcfid.half, cfg_.rpcfid.resamples, seed);
    });
    std::ofstream csv(abs("rpcfid/rpcfid.csv"), std::ios::binary);
    nlohmann::ordered_json j;
    j["config_hash"] = hash_;
    auto& per_seed = j["seeds"] = nlohmann::ordered_json::array();
    const auto vocab = cfg_.vocabulary();
    for (std::size_t i = 0; i < cfg_.seeds.size(); ++i) {
      std::ostringstream part;
      diag::write_rpcfid_csv(part, rows[i], cfg_.seeds[i]);
      std::string text = part.str();
      if (i > 0) text = text.substr(text.find('\n') + 1);
      csv << text;
      nlohmann::ordered_json s;
      s["seed"] = cfg_.seeds[i];
      auto& cls = s["classes"] = nlohmann::ordered_json::array();
      for (const auto& r : rows[i]) {
        auto o = diag::to_json(r);
        o["label"] = vocab[static_cast<std::size_t>(r.class_id)].label;
        o["polysemy_bias"] = vocab[static_cast<std::size_t>(r.class_id)].polysemy_bias;
        cls.push_back(std::move(o));
      }
      per_seed.push_back(std::move(s));
    }
    csv.close();
    std::ofstream js(abs("rpcfid/rpcfid.json"), std::ios::binary);
    js << j.dump(2) << '\n';
    return {"rpcfid/rpcfid.csv", "rpcfid/rpcfid.json"};
  }

  diag::ComparisonReport load_comparison() const {
    std::vector<diag::StrategyRun> runs;
    for (auto seed : cfg_.seeds)
      for (const auto& name : strategies_) {
        const auto path = abs(run_rel(name, seed)) + ".json";
        std::ifstream is(path, std::ios::binary);
        if (!is) throw MissingArtifactError("missing artifact: " + path);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(path + ": " + e.what());
        }
        runs.push_back(diag::run_from_json(j));
      }
    return diag::compare_strategies(cfg_.strategies, cfg_.seeds, std::move(runs), hash_);
  }

  std::vector<std::string> compare() {
    const auto rep = load_comparison();
    {
      std::ofstream os(abs("compare/summary.csv"), std::ios::binary);
      diag::write_summary_csv(os, rep);
    }
    {
      std::ofstream os(abs("compare/runs.csv"), std::ios::binary);
      diag::write_runs_csv(os, rep);
    }
    {
      std::ofstream os(abs("compare/orderings.csv"), std::ios::binary);
      diag::write_orderings_csv(os, rep);
    }
    {
      std::ofstream os(abs("compare/report.json"), std::ios::binary);
      os << diag::to_json(rep).dump(2) << '\n';
    }
    std::ostringstream table;
    table << "strategy            top-1    g_act       g_round     g_scale     bound       gap\n";
    for (const auto& s : rep.summaries) {
      char line[256];
      std::snprintf(line, sizeof line, "%-18s  %.4f  %-10.4g  %-10.4g  %-10.4g  %-10.4g  %.4f\n",
                    s.strategy.c_str(), s.accuracy, s.mean_grad_sq[0], s.mean_grad_sq[1],
                    s.mean_grad_sq[2], s.bound, s.gap);
      table << line;
    }
    log("compare:\n" + table.str());
    return {"compare/summary.csv", "compare/runs.csv", "compare/orderings.csv",
            "compare/report.json"};
  }

  std::vector<std::string> report() {
    auto read_json = [&](const std::string& rel) {
      std::ifstream is(abs(rel), std::ios::binary);
      if (!is) throw MissingArtifactError("missing artifact: " + abs(rel));
      return nlohmann::ordered_json::parse(is);
    };
    nlohmann::ordered_json j;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = hash_;
    j["config"] = to_json(cfg_);
    j["comparison"] = read_json("compare/report.json");
    j["rpcfid"] = read_json("rpcfid/rpcfid.json");
    auto& plots = j["plot_data"] = nlohmann::ordered_json::array();
    for (const auto& name : strategies_)
      for (auto g : quant::kAllGroups)
        plots.push_back("gradtrace/" + name + "_" + std::string(quant::to_string(g)) + ".dat");
    {
      std::ofstream os(abs("report/report.json"), std::ios::binary);
      os << j.dump(2) << '\n';
    }

    // Penultimate features of the real test set and every calibration set of
    // the first seed, for external projection.
    const auto seed = cfg_.seeds.front();
    const auto test = world::load_labeled_set(abs(test_rel(seed)));
    std::vector<world::LabeledSet> sets;
    sets.reserve(strategies_.size());
    for (const auto& name : strategies_) sets.push_back(world::load_labeled_set(abs(calib_rel(name, seed))));
    std::vector<diag::TaggedSet> tagged{{"real_test", &test}};
    for (std::size_t i = 0; i < sets.size(); ++i) tagged.push_back({strategies_[i], &sets[i]});
    const std::string emb = "report/embeddings" + seed_tag(seed) + ".csv";
    {
      std::ofstream os(abs(emb), std::ios::binary);
      diag::export_embeddings(os, cfg_.model_for(seed), load_model(seed), tagged);
    }
    return {"report/report.json", emb};
  }

  ExperimentConfig cfg_;
  std::uint64_t hash_;
  std::filesystem::path root_;
  RunOptions opts_;
  std::vector<std::string> strategies_;  // unique, in config order
  std::mutex log_mutex_;
};

inline Stage stage_from_string(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

}  // namespace dfq::cli
