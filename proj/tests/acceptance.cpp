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

// Acceptance suite: runs the desk-scale experiments and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfqlab/cli/pipeline.hpp"
#include "gradcheck.hpp"

namespace {

using namespace dfq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// Runs keyed by (strategy, seed).
using Runs = std::map<std::pair<std::string, std::uint64_t>, diag::StrategyRun>;

class Experiments {
 public:
  explicit Experiments(fs::path out) : out_(std::move(out)) {}

  // The default experiment, single-threaded and timed from a clean directory.
  const cli::Pipeline& base() {
    if (!base_) {
      fs::remove_all(out_ / "default");
      base_.emplace(cli::ExperimentConfig{}, out_ / "default", cli::RunOptions{false, 1, &std::cerr});
      const auto t0 = Clock::now();
      base_->run_through(cli::Stage::kReport);
      base_seconds_ = seconds_since(t0);
    }
    return *base_;
  }
  double base_seconds() {
    base();
    return base_seconds_;
  }

  // A variant of the default config in its own directory.
  const cli::Pipeline& variant(const std::string& name,
                               const std::function<void(cli::ExperimentConfig&)>& edit) {
    auto it = variants_.find(name);
    if (it == variants_.end()) {
      cli::ExperimentConfig cfg;
      edit(cfg);
      fs::remove_all(out_ / name);
      it = variants_.try_emplace(name, cfg, out_ / name, cli::RunOptions{false, 1, &std::cerr}).first;
      it->second.run_through(cli::Stage::kReport);
    }
    return it->second;
  }

  static Runs runs(const cli::Pipeline& p) {
    const auto j = nlohmann::json::parse(slurp(p.root() / "compare" / "report.json"));
    Runs out;
    for (const auto& r : j.at("runs")) {
      auto run = diag::run_from_json(r);
      out[{run.strategy, run.seed}] = std::move(run);
    }
    return out;
  }

  const fs::path& out() const { return out_; }

 private:
  fs::path out_;
  std::optional<cli::Pipeline> base_;
  double base_seconds_ = 0.0;
  std::map<std::string, cli::Pipeline> variants_;
};

const std::vector<std::uint64_t> kSeeds = cli::ExperimentConfig{}.seeds;

GaussianStats stats(std::vector<double> m, TensorD c) { return {std::move(m), std::move(c)}; }

Outcome fid_correctness() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  RngStream rng(11, 1);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 16;
    std::vector<double> m(dim), shift(dim);
    for (auto& v : m) v = rng.normal();
    const auto c = testing::random_spd(dim, rng.derive(trial), 0.5);
    const auto a = stats(m, c);
    if (diag::fid(a, a) != 0.0) ok = false;
    double dm = 0.0;
    auto b = a;
    for (std::size_t i = 0; i < dim; ++i) {
      const double s = rng.normal();
      b.mean[i] += s;
      dm += s * s;
    }
    if (std::abs(diag::fid(a, b) - dm) > 1e-9 * std::max(1.0, dm)) ok = false;
    const auto e = stats(m, testing::random_spd(dim, rng.derive(100 + trial), 0.5));
    if (std::abs(diag::fid(a, e) - diag::fid(e, a)) > 1e-6) ok = false;
  }
  TensorD four = TensorD::identity(4);
  for (auto& v : four.vec()) v = 4.0 * v;
  const double commuting =
      diag::fid(stats({0, 0, 0, 0}, four), stats({0, 0, 0, 0}, TensorD::identity(4)));
  if (std::abs(commuting - 4.0) > 1e-6) ok = false;
  const double secs = seconds_since(t0);
  d << "identical/mean-shift/symmetry over 20 draws at d=16, 4I vs I = " << fmt(commuting, 10)
    << ", " << fmt(secs, 3) << " s";
  return {ok && secs < 1.0, d.str()};
}

Outcome rpcfid_self_consistency(Experiments& ex) {
  const auto& p = ex.base();
  const auto& cfg = p.config();
  const auto spec = cfg.model_for(0);
  const auto params = model::load_checkpoint<float>(
      (p.root() / "train-ref" / "model_s0.ckpt").string(), spec);
  const world::World w(cfg.world_for(0));
  const std::size_t half = 256;
  double mean = 0.0;
  std::ostringstream d;
  d << "real-vs-real per seed:";
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(1000 + seed, diag::streams::kRpcFidData);
    const int cls = static_cast<int>(seed % spec.num_classes);
    const auto set = world::sample_real(w, cls, 3 * half, rng);
    const auto f = model::extract_features(spec, params, set.images);
    TensorF real({2 * half, f.dim(1)}), third({half, f.dim(1)});
    std::copy(f.vec().begin(), f.vec().begin() + static_cast<std::ptrdiff_t>(real.size()),
              real.vec().begin());
    std::copy(f.vec().begin() + static_cast<std::ptrdiff_t>(real.size()), f.vec().end(),
              third.vec().begin());
    const double r = diag::rpc_fid(real, third, half, 4, RngStream(seed, diag::streams::kRpcFid)).rpc_fid;
    d << ' ' << fmt(r, 3);
    mean += r / 10.0;
  }
  d << "; mean " << fmt(mean) << " (want [0.7, 1.4])";
  return {mean >= 0.7 && mean <= 1.4, d.str()};
}

Outcome polysemy_detection(Experiments& ex) {
  const auto j = nlohmann::json::parse(slurp(ex.base().root() / "rpcfid" / "rpcfid.json"));
  std::size_t hits = 0;
  std::vector<double> poly, clean;
  for (const auto& s : j.at("seeds")) {
    std::vector<std::pair<double, bool>> rows;
    for (const auto& c : s.at("classes")) {
      const bool is_poly = c.at("polysemy_bias").get<double>() > 0.0;
      const double v = c.at("rpc_fid").get<double>();
      rows.emplace_back(v, is_poly);
      (is_poly ? poly : clean).push_back(v);
    }
    std::sort(rows.begin(), rows.end(), std::greater<>());
    if (rows.size() >= 2 && rows[0].second && rows[1].second) ++hits;
  }
  std::sort(clean.begin(), clean.end());
  const double median = clean.empty() ? 0.0
                        : clean.size() % 2 ? clean[clean.size() / 2]
                                           : 0.5 * (clean[clean.size() / 2 - 1] + clean[clean.size() / 2]);
  double mean = 0.0;
  for (double v : poly) mean += v / static_cast<double>(poly.size());
  const std::size_t n = j.at("seeds").size();
  std::ostringstream d;
  d << "polysemous classes top-2 in " << hits << "/" << n << " seeds; mean " << fmt(mean)
    << " vs clean median " << fmt(median) << " (ratio " << fmt(mean / median, 3) << ")";
  return {poly.size() == 2 * n && hits * 5 >= 4 * n && mean >= 2.0 * median, d.str()};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double model64 = 0.0, model32 = 0.0, quant64 = 0.0, quant32 = 0.0;
  bool checked = true;
  const auto s = testing::micro_spec();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto p = testing::random_params(s, RngStream(seed, 30));
    const auto x = testing::random_batch(s, 5, RngStream(seed, 31));
    const auto y = testing::random_targets(5, s.num_classes, RngStream(seed, 32));
    for (bool use_mse : {false, true}) {
      model64 = std::max(model64, testing::model_max_rel_error<double>(s, p, x, y, use_mse));
      model32 = std::max(model32, testing::model_max_rel_error<float>(s, p, x, y, use_mse));
    }
  }
  std::uint64_t seed = 40;
  for (const auto& shape : testing::kMicroShapes) {
    auto m64 = testing::make_micro<double>(shape, seed++);
    testing::fix_bias(m64);
    const auto e64 = testing::check_soft_gradients(m64, m64);
    auto m32 = testing::make_micro<float>(shape, seed++);
    testing::fix_bias(m32);
    const auto oracle = testing::to_f64(m32);
    const auto e32 = testing::check_soft_gradients(m32, oracle);
    checked = checked && e64.checked > 0 && e32.checked > 0;
    quant64 = std::max({quant64, e64.v, e64.scale});
    quant32 = std::max({quant32, e32.v, e32.scale});
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "max rel err model f64 " << fmt(model64, 2) << " f32 " << fmt(model32, 2)
    << ", quantizer f64 " << fmt(quant64, 2) << " f32 " << fmt(quant32, 2) << ", "
    << fmt(secs, 3) << " s";
  return {checked && model64 < 1e-7 && quant64 < 1e-7 && model32 < 1e-4 && quant32 < 1e-4 &&
              secs < 30.0,
          d.str()};
}

bool never_worse_than_nearest(const Runs& runs, std::size_t& blocks) {
  bool ok = true;
  for (const auto& [key, r] : runs)
    for (const auto& b : r.blocks) {
      ++blocks;
      if (!(b.final_mse <= b.init_mse)) ok = false;
    }
  return ok;
}

Outcome ptq_ladder(Experiments& ex) {
  auto bits = [](int w, int a) {
    return [w, a](cli::ExperimentConfig& c) {
      c.strategies = {"real"};
      c.quant.weight_bits = w;
      c.quant.act_bits = a;
    };
  };
  const auto w8 = Experiments::runs(ex.variant("w8a8", bits(8, 8)));
  const auto w4 = Experiments::runs(ex.variant("w4a4", bits(4, 4)));
  const auto w2 = Experiments::runs(ex.base());
  std::ostringstream d;
  bool close = true;
  std::size_t ladder = 0;
  double worst = 0.0;
  for (auto seed : kSeeds) {
    const auto& r8 = w8.at({"real", seed});
    const double drop = std::abs(r8.fp_accuracy - r8.accuracy);
    worst = std::max(worst, drop);
    if (drop > 0.005) close = false;
    if (w4.at({"real", seed}).accuracy >= w2.at({"real", seed}).accuracy) ++ladder;
  }
  std::size_t blocks = 0;
  const bool guard = never_worse_than_nearest(w8, blocks) && never_worse_than_nearest(w4, blocks) &&
                     never_worse_than_nearest(w2, blocks);
  d << "W8A8 max |FP - Q| " << fmt(100 * worst, 3) << " points; W4A4 >= W2A4 in " << ladder << "/"
    << kSeeds.size() << " seeds; " << blocks << " blocks "
    << (guard ? "never exceed" : "EXCEED") << " nearest-rounding MSE";
  return {close && ladder * 5 >= 4 * kSeeds.size() && guard, d.str()};
}

Outcome gradient_ordering(Experiments& ex) {
  const auto runs = Experiments::runs(ex.base());
  std::size_t both = 0, rm = 0;
  std::ostringstream d;
  for (auto seed : kSeeds) {
    const auto& real = runs.at({"real", seed}).mean_grad_sq;
    const auto& single = runs.at({"single", seed}).mean_grad_sq;
    const auto& mixup = runs.at({"mixup", seed}).mean_grad_sq;
    const auto& rmix = runs.at({"real+resizemix", seed}).mean_grad_sq;
    std::size_t above = 0, below = 0;
    for (std::size_t g = 0; g < quant::kNumGroups; ++g) {
      above += single[g] > real[g];
      below += mixup[g] < single[g];
    }
    if (above >= 2 && below >= 2) ++both;
    const auto act = static_cast<std::size_t>(quant::ParamGroup::kActScale);
    if (rmix[act] <= real[act]) ++rm;
    d << (seed ? "; " : "") << "s" << seed << " single>real " << above << "/3, mixup<single "
      << below << "/3";
  }
  d << ". Both hold in " << both << "/" << kSeeds.size() << " seeds; real+resizemix <= real (act) in "
    << rm << "/" << kSeeds.size();
  return {both * 5 >= 4 * kSeeds.size() && rm * 5 >= 3 * kSeeds.size(), d.str()};
}

Outcome end_to_end(Experiments& ex) {
  const std::vector<std::string> augments = {"single+mixup_pixels", "single+cutmix",
                                             "single+resizemix"};
  const auto runs = Experiments::runs(ex.variant("augments", [&](cli::ExperimentConfig& c) {
    c.strategies = {"single", "mixup"};
    c.strategies.insert(c.strategies.end(), augments.begin(), augments.end());
  }));
  double m_single = 0.0, m_mixup = 0.0;
  std::size_t wins = 0;
  std::map<std::string, std::size_t> between;
  for (auto seed : kSeeds) {
    const double s = runs.at({"single", seed}).accuracy, m = runs.at({"mixup", seed}).accuracy;
    m_single += s / static_cast<double>(kSeeds.size());
    m_mixup += m / static_cast<double>(kSeeds.size());
    wins += m >= s;
    for (const auto& a : augments) {
      const double v = runs.at({a, seed}).accuracy;
      between[a] += std::min(s, m) <= v && v <= std::max(s, m) && s <= m;
    }
  }
  bool aug_ok = true;
  std::ostringstream d;
  d << "mean top-1 mixup " << fmt(m_mixup) << " vs single " << fmt(m_single) << ", mixup wins "
    << wins << "/" << kSeeds.size() << "; between:";
  for (const auto& a : augments) {
    d << ' ' << a << ' ' << between[a] << "/" << kSeeds.size();
    if (between[a] * 5 < 3 * kSeeds.size()) aug_ok = false;
  }
  return {m_mixup >= m_single && wins * 5 >= 4 * kSeeds.size() && aug_ok, d.str()};
}

Outcome bound_gap_consistency(Experiments& ex) {
  const auto runs = Experiments::runs(ex.base());
  const auto& names = ex.base().config().strategies;
  std::size_t agree = 0;
  std::ostringstream d;
  for (auto seed : kSeeds) {
    auto extreme = [&](auto value, bool top) {
      std::string best;
      double bv = 0.0;
      for (const auto& n : names) {
        const double v = value(runs.at({n, seed}));
        if (best.empty() || (top ? v > bv : v < bv)) best = n, bv = v;
      }
      return best;
    };
    auto bound = [](const diag::StrategyRun& r) { return r.bound; };
    auto gap = [](const diag::StrategyRun& r) { return r.gap.gap; };
    const auto bt = extreme(bound, true), bb = extreme(bound, false);
    const auto gt = extreme(gap, true), gb = extreme(gap, false);
    agree += bt == gt && bb == gb;
    d << (seed ? "; " : "") << "s" << seed << " bound " << bt << "/" << bb << " gap " << gt << "/"
      << gb;
  }
  d << ". Top and bottom agree in " << agree << "/" << kSeeds.size() << " seeds";
  return {agree * 5 >= 4 * kSeeds.size(), d.str()};
}

Outcome nclass_runs(Experiments& ex) {
  const std::vector<std::string> names = {"nclass2", "nclass3", "nclass4"};
  const auto& p = ex.variant("nclass", [&](cli::ExperimentConfig& c) { c.strategies = names; });
  const auto j = nlohmann::json::parse(slurp(p.root() / "report" / "report.json"));
  std::map<std::string, double> rows;
  for (const auto& s : j.at("comparison").at("strategies"))
    rows[s.at("strategy").get<std::string>()] = s.at("accuracy").get<double>();
  bool ok = rows.size() == names.size();
  std::ostringstream d;
  d << "report rows:";
  for (const auto& n : names) {
    const auto it = rows.find(n);
    ok = ok && it != rows.end() && std::isfinite(it->second);
    d << ' ' << n << '=' << (it == rows.end() ? std::string("missing") : fmt(it->second));
  }
  return {ok, d.str()};
}

Outcome determinism(Experiments& ex) {
  const double secs = ex.base_seconds();
  const auto root = ex.base().root();
  const auto report = slurp(root / "report" / "report.json");
  const auto compare = slurp(root / "compare" / "report.json");
  // Recompute every stage in place.
  cli::Pipeline again(ex.base().config(), ex.out() / "default", cli::RunOptions{true, 1, nullptr});
  again.run_through(cli::Stage::kReport);
  const bool same = slurp(root / "report" / "report.json") == report &&
                    slurp(root / "compare" / "report.json") == compare && !report.empty();
  std::ostringstream d;
  d << "forced rerun " << (same ? "byte-identical" : "DIFFERS") << "; default experiment took "
    << fmt(secs, 4) << " s on one thread (limit 600)";
  return {same && secs < 600.0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfqlab acceptance suite"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "scratch directory for experiment outputs");
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  Experiments ex(out);
  // Criterion 10 is evaluated first so the default experiment is timed from
  // a clean directory before anything else touches it.
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {10, [&] { return determinism(ex); }},
      {1, [] { return fid_correctness(); }},
      {2, [&] { return rpcfid_self_consistency(ex); }},
      {3, [&] { return polysemy_detection(ex); }},
      {4, [] { return gradient_correctness(); }},
      {5, [&] { return ptq_ladder(ex); }},
      {6, [&] { return gradient_ordering(ex); }},
      {7, [&] { return end_to_end(ex); }},
      {8, [&] { return bound_gap_consistency(ex); }},
      {9, [&] { return nclass_runs(ex); }},
  };
  const std::map<int, std::string> titles = {
      {1, "FID correctness"},          {2, "RPC-FID self-consistency"},
      {3, "polysemy detection"},       {4, "gradient correctness"},
      {5, "PTQ sanity ladder"},        {6, "gradient-norm ordering"},
      {7, "end-to-end benefit"},       {8, "bound/gap consistency"},
      {9, "n-class runs"},             {10, "determinism and runtime"},
  };
  std::map<int, Outcome> results;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    try {
      results[id] = fn();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("error: ") + e.what()};
    }
    std::cerr << "criterion " << id << " evaluated\n";
  }
  int failed = 0;
  for (const auto& [id, r] : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << id << ". " << titles.at(id) << ": " << r.detail
              << '\n';
    failed += !r.pass;
  }
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size()
            << " criteria passed\n";
  return failed ? 1 : 0;
}
