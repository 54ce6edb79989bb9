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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dfqlab/cli/pipeline.hpp"
#include "test_util.hpp"

namespace dfq::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

// Small enough that the whole pipeline runs in seconds.
constexpr const char* kTinyConfig = R"({
  // one seed, two strategies, short everything
  "train": {"epochs": 1, "train_per_class": 20, "test_per_class": 10},
  "quant": {"steps": 20, "batch_size": 8},
  "rpcfid": {"half": 18, "resamples": 1},
  "strategies": ["real", "single"],
  "calibration_size": 40,
  "seeds": [0]
})";

TEST(Config, DefaultsAndComments) {
  const auto c = parse_config_text("{ /* nothing */ }");
  EXPECT_EQ(c.strategies, (std::vector<std::string>{"real", "real+resizemix", "single", "mixup"}));
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.quant.weight_bits, 2);
  EXPECT_EQ(c.quant.act_bits, 4);
  EXPECT_EQ(c.calibration_size, 1024u);
  const auto t = parse_config_text(kTinyConfig);
  EXPECT_EQ(t.quant.steps, 20u);
  EXPECT_EQ(t.seeds, (std::vector<std::uint64_t>{0}));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text(R"({"quant": {"stepz": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"quant": {"steps": "many"}})"), ConfigError);
  EXPECT_THROW(parse_config_text("{"), ConfigError);
  EXPECT_THROW(validate(parse_config_text(R"({"quant": {"weight_bits": 9}})")), ConfigError);
  EXPECT_THROW(validate(parse_config_text(R"({"strategies": ["real+spin"]})")), ConfigError);
  EXPECT_THROW(validate(parse_config_text(R"({"rpcfid": {"half": 4}})")), ConfigError);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  auto a = parse_config_text(kTinyConfig);
  auto b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.quant.steps = 21;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hex64(0xabc).size(), 16u);
}

TEST(Stages, NamesRoundTrip) {
  for (auto s : kAllStages) EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_THROW(stage_from_string("fly"), ConfigError);
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
  std::vector<int> hit(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) throw DataError("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
}

TEST(RunManifestTest, DetectsMissingAndTampered) {
  testing::TempDir dir;
  spit(dir.path() / "a.txt", "alpha");
  RunManifest m(dir.path(), 5);
  EXPECT_THROW(m.verify("stage"), MissingArtifactError);
  m.mark_complete("stage", {"a.txt"});
  m.save();
  auto back = RunManifest::open(dir.path(), 5);
  EXPECT_NO_THROW(back.verify("stage"));
  spit(dir.path() / "a.txt", "alphA");
  EXPECT_THROW(back.verify("stage"), TamperedArtifactError);
  fs::remove(dir.path() / "a.txt");
  EXPECT_THROW(back.verify("stage"), MissingArtifactError);
  EXPECT_THROW(RunManifest::open(dir.path(), 6), TamperedArtifactError);
}

TEST(DirectoryLockTest, SecondHolderIsRejected) {
  testing::TempDir dir;
  {
    DirectoryLock a(dir.path());
    EXPECT_THROW(DirectoryLock b(dir.path()), LockedError);
  }
  EXPECT_NO_THROW(DirectoryLock c(dir.path()));
}

#ifdef DFQLAB_TOOL

struct ToolResult {
  int code = -1;
  std::string out, err;
};

class Tool : public ::testing::Test {
 protected:
  void SetUp() override { spit(dir_.path() / "tiny.json", kTinyConfig); }

  ToolResult run(const std::string& args, const std::string& env = "") {
    const auto out = dir_.path() / "stdout.txt", err = dir_.path() / "stderr.txt";
    const std::string cmd = "cd '" + dir_.path().string() + "' && " + env + " '" + DFQLAB_TOOL + "' " + args +
                            " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    ToolResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }
  std::string tiny() const { return "--config '" + dir_.str("tiny.json") + "'"; }
  // The printed root, resolved against the tool's working directory.
  fs::path root_of(const ToolResult& r) const {
    std::string s = r.out;
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return dir_.path() / s;
  }

  testing::TempDir dir_;
};

TEST_F(Tool, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("fly").code, 2);
  EXPECT_EQ(run("compare --jobs 0").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Tool, InvalidConfig) {
  spit(dir_.path() / "bad.json", R"({"quant": {"weight_bits": 12}})");
  const auto r = run("train-ref --out o --config '" + dir_.str("bad.json") + "'");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("bit-width"), std::string::npos) << r.err;
  EXPECT_EQ(run("train-ref --out o --config '" + dir_.str("absent.json") + "'").code, 3);
}

TEST_F(Tool, MissingUpstreamNamesThePath) {
  const auto r = run("calibrate --out o " + tiny());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("missing artifact"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("train-ref"), std::string::npos) << r.err;
}

TEST_F(Tool, FullRunIsIdempotentAndDetectsTampering) {
  const auto first = run("compare --out o " + tiny());
  ASSERT_EQ(first.code, 0) << first.err;
  const auto root = root_of(first);
  EXPECT_TRUE(fs::exists(root / "compare" / "summary.csv"));
  EXPECT_NE(first.err.find("single"), std::string::npos);
  const auto summary = slurp(root / "compare" / "summary.csv");
  EXPECT_NE(summary.find("real"), std::string::npos);
  EXPECT_NE(summary.find("single"), std::string::npos);

  const auto rep = run("report --out o " + tiny());
  ASSERT_EQ(rep.code, 0) << rep.err;
  const auto report = slurp(root / "report" / "report.json");
  const auto again = run("report --out o " + tiny());
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(root / "report" / "report.json"), report);
  const auto forced = run("report --force --out o " + tiny());
  ASSERT_EQ(forced.code, 0) << forced.err;
  EXPECT_EQ(slurp(root / "report" / "report.json"), report);

  // A fresh directory reproduces the same bytes.
  const auto fresh = run("report --out p --jobs 3 " + tiny());
  ASSERT_EQ(fresh.code, 0) << fresh.err;
  EXPECT_EQ(slurp(root_of(fresh) / "report" / "report.json"), report);

  const auto ckpt = root / "train-ref" / "model_s0.ckpt";
  auto bytes = slurp(ckpt);
  bytes[bytes.size() / 2] ^= 0x5a;
  spit(ckpt, bytes);
  const auto t = run("calibrate --out o " + tiny());
  EXPECT_EQ(t.code, 5);
  EXPECT_NE(t.err.find("model_s0.ckpt"), std::string::npos) << t.err;

  spit(root / ".lock", "1\n");
  EXPECT_EQ(run("calibrate --out o " + tiny()).code, 6);
}

TEST_F(Tool, SeedOverrideAndOutputPrecedence) {
  const auto env = run("train-ref " + tiny() + " --seed 3", "DFQLAB_OUT=from_env");
  ASSERT_EQ(env.code, 0) << env.err;
  const auto root = root_of(env);
  EXPECT_EQ(root.parent_path().filename(), "from_env");
  EXPECT_TRUE(fs::exists(root / "train-ref" / "model_s3.ckpt"));
  EXPECT_FALSE(fs::exists(root / "train-ref" / "model_s0.ckpt"));

  const auto flag = run("train-ref --out from_flag " + tiny() + " --seed 3", "DFQLAB_OUT=from_env");
  ASSERT_EQ(flag.code, 0) << flag.err;
  EXPECT_EQ(root_of(flag).parent_path().filename(), "from_flag");
  EXPECT_EQ(root_of(flag).filename(), root.filename());

  const auto dflt = run("train-ref " + tiny() + " --seed 3", "env -u DFQLAB_OUT");
  ASSERT_EQ(dflt.code, 0) << dflt.err;
  EXPECT_EQ(root_of(dflt).parent_path().filename(), "out");
}

#endif

}  // namespace
}  // namespace dfq::cli
