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

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfqlab/error.hpp"
#include "dfqlab/world/world.hpp"

// Run bookkeeping for one output directory: which stages are complete and
// the content hash of every artifact they produced.
namespace dfq::cli {

inline constexpr const char* kToolVersion = "0.1.0";

class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

class TamperedArtifactError : public Error {
 public:
  using Error::Error;
};

class LockedError : public Error {
 public:
  using Error::Error;
};

// FNV-1a 64 over the file's bytes.
inline std::uint64_t file_hash(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw MissingArtifactError("missing artifact: " + p.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

struct StageRecord {
  bool complete = false;
  std::map<std::string, std::uint64_t> artifacts;  // path relative to the run root
};

class RunManifest {
 public:
  RunManifest() = default;
  RunManifest(std::filesystem::path root, std::uint64_t config_hash)
      : root_(std::move(root)), config_hash_(config_hash) {}

  static std::filesystem::path file(const std::filesystem::path& root) {
    return root / "manifest.json";
  }

  // Loads the manifest under `root`, or starts an empty one.
  static RunManifest open(const std::filesystem::path& root, std::uint64_t config_hash) {
    RunManifest m(root, config_hash);
    const auto path = file(root);
    if (!std::filesystem::exists(path)) return m;
    std::ifstream is(path, std::ios::binary);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
      if (j.at("config_hash").get<std::uint64_t>() != config_hash)
        throw TamperedArtifactError("run manifest " + path.string() +
                                    " belongs to a different configuration");
      for (const auto& [name, st] : j.at("stages").items()) {
        StageRecord r;
        r.complete = st.at("complete").get<bool>();
        for (const auto& [a, h] : st.at("artifacts").items()) r.artifacts[a] = h.get<std::uint64_t>();
        m.stages_[name] = std::move(r);
      }
    } catch (const nlohmann::json::exception& e) {
      throw TamperedArtifactError("run manifest " + path.string() + " is unreadable: " + e.what());
    }
    return m;
  }

  void save() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash_;
    j["tool_version"] = kToolVersion;
    auto& stages = j["stages"] = nlohmann::ordered_json::object();
    for (const auto& [name, st] : stages_) {
      nlohmann::ordered_json s;
      s["complete"] = st.complete;
      auto& a = s["artifacts"] = nlohmann::ordered_json::object();
      for (const auto& [p, h] : st.artifacts) a[p] = h;
      stages[name] = std::move(s);
    }
    std::filesystem::create_directories(root_);
    const auto tmp = file(root_).string() + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw Error("cannot write " + tmp);
      os << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, file(root_));
  }

  bool complete(const std::string& stage) const {
    const auto it = stages_.find(stage);
    return it != stages_.end() && it->second.complete;
  }

  const StageRecord* stage(const std::string& name) const {
    const auto it = stages_.find(name);
    return it == stages_.end() ? nullptr : &it->second;
  }

  // Records a finished stage, hashing each artifact as it is now on disk.
  void mark_complete(const std::string& stage, const std::vector<std::string>& artifacts) {
    StageRecord r;
    r.complete = true;
    for (const auto& a : artifacts) r.artifacts[a] = file_hash(root_ / a);
    stages_[stage] = std::move(r);
  }

  void invalidate(const std::string& stage) { stages_.erase(stage); }

  // Throws if an artifact of `stage` is gone (missing) or changed (tampered).
  void verify(const std::string& stage) const {
    const auto* st = this->stage(stage);
    if (!st || !st->complete)
      throw MissingArtifactError("missing artifact: " + (root_ / stage).string() + " (stage '" +
                                 stage + "' has not been run)");
    for (const auto& [rel, h] : st->artifacts) {
      const auto p = root_ / rel;
      if (!std::filesystem::exists(p)) throw MissingArtifactError("missing artifact: " + p.string());
      if (file_hash(p) != h)
        throw TamperedArtifactError("artifact " + p.string() +
                                    " does not match its recorded content hash");
    }
  }

  const std::filesystem::path& root() const { return root_; }
  std::uint64_t config_hash() const { return config_hash_; }

 private:
  std::filesystem::path root_;
  std::uint64_t config_hash_ = 0;
  std::map<std::string, StageRecord> stages_;
};

// Exclusive lock on an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& root) : path_(root / ".lock") {
    std::filesystem::create_directories(root);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        throw LockedError("output directory is locked by another run: " + path_.string() +
                          " (remove it if no run is active)");
      throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace dfq::cli
