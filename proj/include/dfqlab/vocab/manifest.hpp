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

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/error.hpp"
#include "dfqlab/vocab/prompts.hpp"

// Prompt manifests are JSON Lines with the fixed field order
// id, strategy, template_id, class_ids, text, seed.
namespace dfq::vocab {

inline nlohmann::ordered_json to_json(const PromptRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["strategy"] = std::string(to_string(r.strategy));
  j["template_id"] = r.template_id;
  j["class_ids"] = r.class_ids;
  j["text"] = r.text;
  j["seed"] = r.seed;
  return j;
}

inline PromptRecord record_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kFields = {"id",        "strategy", "template_id",
                                                   "class_ids", "text",     "seed"};
  if (!j.is_object() || j.size() != kFields.size())
    throw ParseError("record must be an object with exactly 6 fields");
  for (const auto& f : kFields)
    if (!j.contains(f)) throw ParseError("record is missing field '" + f + "'");
  PromptRecord r;
  r.id = j.at("id").get<std::uint64_t>();
  r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  r.template_id = j.at("template_id").get<int>();
  r.class_ids = j.at("class_ids").get<std::vector<int>>();
  r.text = j.at("text").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  validate(r);
  return r;
}

inline void write_manifest(std::ostream& os, const std::vector<PromptRecord>& records) {
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

inline std::vector<PromptRecord> read_manifest(std::istream& is) {
  std::vector<PromptRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed manifest record: ") + e.what(), lineno);
    } catch (const Error& e) {
      throw ParseError(std::string("malformed manifest record: ") + e.what(), lineno);
    }
  }
  return out;
}

inline void save_manifest(const std::string& path, const std::vector<PromptRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_manifest(os, records);
}

inline std::vector<PromptRecord> load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_manifest(is);
}

}  // namespace dfq::vocab
