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
#include <string>

#include <json.hpp>

#include "dfqlab/numerics/tensor_io.hpp"
#include "dfqlab/world/world.hpp"

// A labeled set on disk: `<stem>.dfqt` holds the images, `<stem>.json` the
// soft labels, class ids, provenance, world config hash and seed.
namespace dfq::world {

struct SetMetadata {
  std::uint64_t world_hash = 0;
  std::uint64_t seed = 0;
};

inline void save_labeled_set(const std::string& stem, const LabeledSet& set,
                             const SetMetadata& meta) {
  io::save_tensor(stem + ".dfqt", set.images);
  nlohmann::ordered_json j;
  j["provenance"] = std::string(to_string(set.provenance));
  j["world_config_hash"] = meta.world_hash;
  j["seed"] = meta.seed;
  j["num_classes"] = set.num_classes();
  auto& labels = j["labels"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = set.soft_labels.row(i);
    labels.push_back(std::vector<float>(row.begin(), row.end()));
  }
  j["class_ids"] = set.class_ids;
  std::ofstream os(stem + ".json", std::ios::binary);
  if (!os) throw Error("cannot open " + stem + ".json for writing");
  os << j.dump() << '\n';
}

inline LabeledSet load_labeled_set(const std::string& stem, SetMetadata* meta = nullptr) {
  LabeledSet set;
  set.images = io::load_tensor<float>(stem + ".dfqt");
  std::ifstream is(stem + ".json", std::ios::binary);
  if (!is) throw Error("cannot open " + stem + ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("labeled set sidecar: ") + e.what());
  }
  set.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  const auto k = j.at("num_classes").get<std::size_t>();
  const auto& labels = j.at("labels");
  if (labels.size() != set.images.dim(0))
    throw ParseError("labeled set sidecar: label count does not match image count");
  set.soft_labels = TensorF({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = labels[i].get<std::vector<float>>();
    if (row.size() != k) throw ParseError("labeled set sidecar: bad label width");
    std::copy(row.begin(), row.end(), set.soft_labels.row(i).begin());
  }
  set.class_ids = j.at("class_ids").get<std::vector<std::vector<int>>>();
  if (meta) {
    meta->world_hash = j.at("world_config_hash").get<std::uint64_t>();
    meta->seed = j.at("seed").get<std::uint64_t>();
  }
  return set;
}

}  // namespace dfq::world
