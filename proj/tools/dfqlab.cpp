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

// dfqlab: staged data-free quantization experiments.
//
// Exit codes: 0 success, 1 other failure, 2 usage error or unknown
// subcommand, 3 invalid config, 4 missing upstream artifact, 5 tampered
// artifact, 6 output directory locked.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfqlab/cli/pipeline.hpp"

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadConfig = 3,
  kMissing = 4,
  kTampered = 5,
  kLocked = 6,
};

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  bool force = false;
  std::string out;
  std::size_t jobs = 1;
};

std::string output_base(const Options& o, const dfq::cli::ExperimentConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("DFQLAB_OUT"); env && *env) return env;
  return "out";
}

int run(dfq::cli::Stage stage, const Options& o) {
  using namespace dfq;
  cli::ExperimentConfig cfg = o.config.empty() ? cli::ExperimentConfig{} : cli::load_config(o.config);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  cli::validate(cfg);
  cli::Pipeline p(cfg, output_base(o, cfg), {o.force, o.jobs, &std::cerr});
  // compare and report orchestrate their upstream; the others run one stage.
  if (stage == cli::Stage::kCompare || stage == cli::Stage::kReport)
    p.run_through(stage);
  else
    p.run_stage(stage);
  std::cout << p.root().string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfqlab: data-free quantization calibration experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config, "experiment config (JSON); defaults if omitted");
  app.add_option("--seed", o.seeds, "seed(s) replacing the config's seed list");
  app.add_flag("--force", o.force, "rerun stages even if complete");
  app.add_option("--out", o.out, "output base directory (else config, DFQLAB_OUT, ./out)");
  app.add_option("--jobs", o.jobs, "worker threads within a stage")->check(CLI::PositiveNumber);

  const std::vector<std::pair<dfq::cli::Stage, const char*>> commands = {
      {dfq::cli::Stage::kTrainRef, "train the full-precision reference model per seed"},
      {dfq::cli::Stage::kGenPrompts, "write prompt manifests for prompt-based strategies"},
      {dfq::cli::Stage::kSynth, "render calibration sets and RPC-FID sample sets"},
      {dfq::cli::Stage::kCalibrate, "quantize every (strategy, seed) and record gradient traces"},
      {dfq::cli::Stage::kGradTrace, "emit mean gradient-norm traces as plot data"},
      {dfq::cli::Stage::kRpcFid, "per-class RPC-FID of single-class synthetic images"},
      {dfq::cli::Stage::kCompare, "compare strategies; runs missing upstream stages"},
      {dfq::cli::Stage::kReport, "merged report and embeddings; runs missing upstream stages"},
  };
  std::vector<std::pair<CLI::App*, dfq::cli::Stage>> subs;
  for (const auto& [stage, help] : commands)
    subs.emplace_back(app.add_subcommand(std::string(dfq::cli::to_string(stage)), help), stage);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    for (const auto& [sub, stage] : subs)
      if (sub->parsed()) return run(stage, o);
    return kUsage;
  } catch (const dfq::ConfigError& e) {
    std::cerr << "dfqlab: invalid config: " << e.what() << '\n';
    return kBadConfig;
  } catch (const dfq::cli::MissingArtifactError& e) {
    std::cerr << "dfqlab: " << e.what() << '\n';
    return kMissing;
  } catch (const dfq::cli::TamperedArtifactError& e) {
    std::cerr << "dfqlab: " << e.what() << '\n';
    return kTampered;
  } catch (const dfq::cli::LockedError& e) {
    std::cerr << "dfqlab: " << e.what() << '\n';
    return kLocked;
  } catch (const std::exception& e) {
    std::cerr << "dfqlab: error: " << e.what() << '\n';
    return kFailure;
  }
}
