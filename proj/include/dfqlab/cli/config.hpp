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
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/diagnostics/fid.hpp"
#include "dfqlab/diagnostics/strategy.hpp"
#include "dfqlab/error.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/model/train.hpp"
#include "dfqlab/quant/calibrate.hpp"
#include "dfqlab/vocab/vocabulary.hpp"
#include "dfqlab/world/world.hpp"

// Experiment configuration. The file is JSON; every section and key is
// optional and defaults as below, but unknown keys are rejected.
//
//   {
//     "world":  {"height": 16, "width": 16, "noise_sigma": 0.25, "max_frequency": 3,
//                "contrast": 0.07, "lambda_lo": 0.3, "lambda_hi": 0.7,
//                "composition": "spatial" | "convex", "polysemy_bias": 0.8},
//     "model":  {"conv1": 8, "conv2": 16, "d_feat": 16, "input_offset": 0.5},
//     "train":  {"epochs": 8, "batch_size": 64, "learning_rate": 0.05, "momentum": 0.9,
//                "weight_decay": 0.0005, "train_per_class": 500, "test_per_class": 200},
//     "quant":  {"weight_bits": 2, "act_bits": 4, "quantize_activations": true,
//                "steps": 1000, "batch_size": 32, "lr_rounding": 0.01,
//                "lr_weight_scale": 0.001, "lr_act_scale": 0.001, "reg_weight": 0.01,
//                "beta_start": 20, "beta_end": 2, "warmup": 0.2, "sigma": 1,
//                "learn_rounding": true, "learn_weight_scale": true,
//                "learn_act_scale": true},
//     "rpcfid": {"half": 256, "resamples": 4},
//     "strategies": ["real", "real+resizemix", "single", "mixup"],
//     "calibration_size": 1024,
//     "seeds": [0, 1, 2, 3, 4],
//     "templates": [...],
//     "output_dir": "out"
//   }
namespace dfq::cli {

struct DataConfig {
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 200;
};

struct RpcFidConfig {
  std::size_t half = 256;
  std::size_t resamples = 4;
};

struct ExperimentConfig {
  world::WorldSpec world;
  double polysemy_bias = 0.8;
  model::ModelSpec model;
  model::TrainConfig train;
  DataConfig data;
  quant::QuantConfig quant;
  RpcFidConfig rpcfid;
  std::vector<std::string> strategies = {"real", "real+resizemix", "single", "mixup"};
  std::size_t calibration_size = 1024;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<std::string> templates = vocab::default_templates();
  std::string output_dir;  // empty: not set in the file

  vocab::Vocabulary vocabulary() const { return vocab::default_vocabulary(polysemy_bias); }

  // World for one seed: the configured spec with the vocabulary's polysemy.
  world::WorldSpec world_for(std::uint64_t seed) const {
    world::WorldSpec w = world::spec_from_vocabulary(vocabulary(), world);
    w.seed = seed;
    return w;
  }
  model::ModelSpec model_for(std::uint64_t seed) const {
    model::ModelSpec m = model;
    m.in_channels = 1;
    m.height = world.height;
    m.width = world.width;
    m.num_classes = vocabulary().size();
    m.init_seed = seed;
    return m;
  }
};

namespace detail {

// Reads keys from a JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  Section sub(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    const auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, path_ + "." + key);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where() + "." + k);
  }

 private:
  std::string where() const { return path_; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  world::validate(c.world_for(0));
  model::validate(c.model_for(0));
  quant::validate(c.quant);
  if (c.strategies.empty()) throw ConfigError("at least one strategy is required");
  for (const auto& s : c.strategies) diag::parse_strategy(s);
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.calibration_size < 2) throw ConfigError("calibration_size must be at least 2");
  if (c.templates.empty()) throw ConfigError("template pool is empty");
  if (c.data.train_per_class < 1 || c.data.test_per_class < 1)
    throw ConfigError("train/test sizes must be positive");
  if (c.train.batch_size < 1) throw ConfigError("train batch_size must be positive");
  if (!(c.polysemy_bias >= 0.0 && c.polysemy_bias <= 1.0))
    throw ConfigError("polysemy_bias outside [0, 1]");
  if (c.rpcfid.resamples < 1) throw ConfigError("rpcfid.resamples must be >= 1");
  if (c.rpcfid.half < diag::min_half(c.model.d_feat))
    throw ConfigError("rpcfid.half must be at least d_feat + 2");
}

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  ExperimentConfig c;
  detail::Section top(root, "config");
  {
    auto w = top.sub("world");
    w.get("height", c.world.height);
    w.get("width", c.world.width);
    w.get("noise_sigma", c.world.noise_sigma);
    w.get("max_frequency", c.world.max_frequency);
    w.get("contrast", c.world.contrast);
    w.get("lambda_lo", c.world.lambda_lo);
    w.get("lambda_hi", c.world.lambda_hi);
    std::string comp = "spatial";
    w.get("composition", comp);
    if (comp == "spatial") c.world.composition = world::Composition::kSpatial;
    else if (comp == "convex") c.world.composition = world::Composition::kConvex;
    else throw ConfigError("config.world.composition must be 'spatial' or 'convex'");
    w.get("polysemy_bias", c.polysemy_bias);
    w.finish();
  }
  {
    auto m = top.sub("model");
    m.get("conv1", c.model.conv1);
    m.get("conv2", c.model.conv2);
    m.get("d_feat", c.model.d_feat);
    m.get("input_offset", c.model.input_offset);
    m.finish();
  }
  {
    auto t = top.sub("train");
    t.get("epochs", c.train.epochs);
    t.get("batch_size", c.train.batch_size);
    t.get("learning_rate", c.train.learning_rate);
    t.get("momentum", c.train.momentum);
    t.get("weight_decay", c.train.weight_decay);
    t.get("train_per_class", c.data.train_per_class);
    t.get("test_per_class", c.data.test_per_class);
    t.finish();
  }
  {
    auto q = top.sub("quant");
    q.get("weight_bits", c.quant.weight_bits);
    q.get("act_bits", c.quant.act_bits);
    q.get("quantize_activations", c.quant.quantize_activations);
    q.get("steps", c.quant.steps);
    q.get("batch_size", c.quant.batch_size);
    q.get("lr_rounding", c.quant.lr_rounding);
    q.get("lr_weight_scale", c.quant.lr_weight_scale);
    q.get("lr_act_scale", c.quant.lr_act_scale);
    q.get("reg_weight", c.quant.reg_weight);
    q.get("beta_start", c.quant.beta_start);
    q.get("beta_end", c.quant.beta_end);
    q.get("warmup", c.quant.warmup);
    q.get("sigma", c.quant.sigma);
    q.get("learn_rounding", c.quant.learn_rounding);
    q.get("learn_weight_scale", c.quant.learn_weight_scale);
    q.get("learn_act_scale", c.quant.learn_act_scale);
    q.finish();
  }
  {
    auto r = top.sub("rpcfid");
    r.get("half", c.rpcfid.half);
    r.get("resamples", c.rpcfid.resamples);
    r.finish();
  }
  top.get("strategies", c.strategies);
  top.get("calibration_size", c.calibration_size);
  top.get("seeds", c.seeds);
  top.get("templates", c.templates);
  top.get("output_dir", c.output_dir);
  top.finish();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

// Canonical form: every field with its effective value. The output
// directory is excluded so the same experiment hashes equally anywhere.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  auto w = world::to_json(c.world);
  w.erase("seed");
  w.erase("polysemy_bias");
  w.erase("meanings_per_class");
  w["polysemy_bias"] = c.polysemy_bias;
  j["world"] = w;
  j["model"] = {{"conv1", c.model.conv1},
                {"conv2", c.model.conv2},
                {"d_feat", c.model.d_feat},
                {"input_offset", c.model.input_offset}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"train_per_class", c.data.train_per_class},
                {"test_per_class", c.data.test_per_class}};
  const auto& q = c.quant;
  j["quant"] = {{"weight_bits", q.weight_bits},
                {"act_bits", q.act_bits},
                {"quantize_activations", q.quantize_activations},
                {"steps", q.steps},
                {"batch_size", q.batch_size},
                {"lr_rounding", q.lr_rounding},
                {"lr_weight_scale", q.lr_weight_scale},
                {"lr_act_scale", q.lr_act_scale},
                {"reg_weight", q.reg_weight},
                {"beta_start", q.beta_start},
                {"beta_end", q.beta_end},
                {"warmup", q.warmup},
                {"sigma", q.sigma},
                {"learn_rounding", q.learn_rounding},
                {"learn_weight_scale", q.learn_weight_scale},
                {"learn_act_scale", q.learn_act_scale}};
  j["rpcfid"] = {{"half", c.rpcfid.half}, {"resamples", c.rpcfid.resamples}};
  j["strategies"] = c.strategies;
  j["calibration_size"] = c.calibration_size;
  j["seeds"] = c.seeds;
  j["templates"] = c.templates;
  return j;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
  return world::fnv1a64(to_json(c).dump());
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace dfq::cli
