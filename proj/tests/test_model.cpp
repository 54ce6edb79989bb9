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

#include <cmath>
#include <sstream>

#include "dfqlab/model/checkpoint.hpp"
#include "dfqlab/model/model.hpp"
#include "dfqlab/model/train.hpp"
#include "dfqlab/vocab/vocabulary.hpp"
#include "dfqlab/world/world.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace dfq::model {
namespace {

using namespace dfq::testing;

std::size_t param_count(const ModelParams<double>& p) {
  std::size_t n = 0;
  for (const auto& l : p.layers) n += l.weight.size() + l.bias.size();
  return n;
}

TEST(ModelSpec, MicroHasFiftyTwoParameters) {
  EXPECT_EQ(param_count(zero_params<double>(micro_spec())), 52u);
}

TEST(Forward, ZeroParamsGiveZeroLogits) {
  const auto s = ModelSpec{};
  const auto out = forward<float>(s, zero_params<float>(s), random_batch(s, 3, RngStream(1, 1)));
  for (float v : out.logits.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, BatchInvariance) {
  const ModelSpec s;
  const auto p = init_params<float>(s);
  const auto batch = random_batch(s, 8, RngStream(2, 2));
  const auto all = forward<float>(s, p, batch, false).logits;
  for (std::size_t i = 0; i < 8; ++i) {
    TensorF one({1, 1, s.height, s.width});
    std::copy(batch.row(i).begin(), batch.row(i).end(), one.row(0).begin());
    const auto single = forward<float>(s, p, one, false).logits;
    EXPECT_TRUE(std::equal(single.row(0).begin(), single.row(0).end(), all.row(i).begin()));
  }
}

TEST(Forward, RandomParamsFiniteAndShapeChecked) {
  const ModelSpec s;
  const auto p = init_params<float>(s);
  EXPECT_TRUE(forward<float>(s, p, random_batch(s, 4, RngStream(3, 3)), false).logits.all_finite());
  EXPECT_THROW(forward<float>(s, p, TensorF({2, 1, 8, 8}), false), PreconditionError);
}

TEST(Backward, CrossEntropyMatchesFiniteDifferencesF64) {
  const auto s = micro_spec();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto p = random_params(s, RngStream(seed, 10));
    const auto x = random_batch(s, 5, RngStream(seed, 11));
    const auto y = random_targets(5, 3, RngStream(seed, 12));
    EXPECT_LT(model_max_rel_error<double>(s, p, x, y, false), 1e-7) << "seed " << seed;
  }
}

TEST(Backward, MseMatchesFiniteDifferencesF64) {
  const auto s = micro_spec();
  const auto p = random_params(s, RngStream(7, 10));
  const auto x = random_batch(s, 5, RngStream(7, 11));
  const auto y = random_targets(5, 3, RngStream(7, 12));
  EXPECT_LT(model_max_rel_error<double>(s, p, x, y, true), 1e-7);
}

TEST(Backward, F32MatchesF64Oracle) {
  const auto s = micro_spec();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto p = random_params(s, RngStream(seed, 20));
    const auto x = random_batch(s, 5, RngStream(seed, 21));
    const auto y = random_targets(5, 3, RngStream(seed, 22));
    EXPECT_LT(model_max_rel_error<float>(s, p, x, y, false), 1e-4) << "seed " << seed;
    EXPECT_LT(model_max_rel_error<float>(s, p, x, y, true), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, PerfectFitGivesZeroGradient) {
  const auto s = micro_spec();
  const auto p = random_params(s, RngStream(1, 1));
  const auto x = random_batch(s, 4, RngStream(1, 2));
  const auto pass = forward<double>(s, p, x);
  const auto loss = mse(pass.logits, pass.logits);
  EXPECT_EQ(loss.value, 0.0);
  const auto g = backward<double>(s, p, pass, loss.grad);
  for (const auto& l : g.layers) {
    for (double v : l.weight.vec()) EXPECT_EQ(v, 0.0);
    for (double v : l.bias.vec()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, LossScaleIsLinear) {
  const auto s = micro_spec();
  const auto p = random_params(s, RngStream(2, 1));
  const auto x = random_batch(s, 4, RngStream(2, 2));
  const auto y = random_targets(4, 3, RngStream(2, 3));
  const auto pass = forward<double>(s, p, x);
  const auto g1 = backward<double>(s, p, pass, cross_entropy(pass.logits, y, 1.0).grad);
  const auto g2 = backward<double>(s, p, pass, cross_entropy(pass.logits, y, 2.0).grad);
  for (std::size_t b = 0; b < kNumBlocks; ++b)
    for (std::size_t i = 0; i < g1.layers[b].weight.size(); ++i)
      EXPECT_NEAR(g2.layers[b].weight[i], 2.0 * g1.layers[b].weight[i], 1e-14);
}

TEST(Features, ShapeAndDeterminism) {
  const ModelSpec s;
  const auto p = init_params<float>(s);
  const auto x = random_batch(s, 6, RngStream(4, 4));
  const auto f = extract_features(s, p, x);
  EXPECT_EQ(f.shape(), (Shape{6, s.d_feat}));
  EXPECT_EQ(f.vec(), extract_features(s, p, x).vec());
  for (float v : f.vec()) EXPECT_GE(v, 0.0f);  // post-ReLU
}

struct Trained {
  ModelSpec spec;
  world::LabeledSet train, test;
  TrainResult<float> result;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    const world::World w(world::spec_from_vocabulary(vocab::default_vocabulary()));
    r.train = world::sample_real_balanced(w, 500, RngStream(0, 1));
    r.test = world::sample_real_balanced(w, 200, RngStream(0, 2));
    r.result = train_reference<float>(r.spec, r.train, r.test, TrainConfig{}, RngStream(0, 3));
    return r;
  }();
  return t;
}

TEST(Train, DefaultDeskConfigReachesNinetyPercent) {
  EXPECT_GE(trained().result.test_accuracy, 0.90);
  EXPECT_EQ(trained().result.log.size(), TrainConfig{}.epochs);
  EXPECT_TRUE(trained().result.params.all_finite());
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto& t = trained();
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train_reference<float>(t.spec, t.train, t.test, cfg, RngStream(0, 3));
  const auto init = init_params<float>(t.spec);
  for (std::size_t b = 0; b < kNumBlocks; ++b)
    EXPECT_EQ(r.params.layers[b].weight.vec(), init.layers[b].weight.vec());
}

TEST(Train, DeterministicGivenSeed) {
  const world::World w(world::spec_from_vocabulary(vocab::default_vocabulary()));
  const auto train = world::sample_real_balanced(w, 40, RngStream(1, 1));
  TrainConfig cfg;
  cfg.epochs = 2;
  const ModelSpec s;
  const auto a = train_reference<float>(s, train, train, cfg, RngStream(1, 2));
  const auto b = train_reference<float>(s, train, train, cfg, RngStream(1, 2));
  for (std::size_t l = 0; l < kNumBlocks; ++l)
    EXPECT_EQ(a.params.layers[l].weight.vec(), b.params.layers[l].weight.vec());
}

TEST(Train, DivergenceReportsStep) {
  const world::World w(world::spec_from_vocabulary(vocab::default_vocabulary()));
  const auto train = world::sample_real_balanced(w, 20, RngStream(1, 1));
  TrainConfig cfg;
  cfg.learning_rate = 1e30;
  try {
    train_reference<float>(ModelSpec{}, train, train, cfg, RngStream(1, 2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GE(e.step(), 0);
  }
}

TEST(Features, TrainedClassesAreSeparated) {
  const auto& t = trained();
  const auto f = extract_features(t.spec, t.result.params, t.test.images).cast<double>();
  // The clean pair whose prototypes are farthest apart in pixel space.
  const auto vocab = vocab::default_vocabulary();
  const world::World w(world::spec_from_vocabulary(vocab));
  int cls[2] = {-1, -1};
  double widest = -1.0;
  for (std::size_t a = 0; a < vocab.size(); ++a)
    for (std::size_t b = a + 1; b < vocab.size(); ++b) {
      if (vocab[a].meanings.size() > 1 || vocab[b].meanings.size() > 1) continue;
      const auto& pa = w.prototype(static_cast<int>(a));
      const auto& pb = w.prototype(static_cast<int>(b));
      double d = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) d += std::pow(pa[i] - pb[i], 2);
      if (d > widest) widest = d, cls[0] = static_cast<int>(a), cls[1] = static_cast<int>(b);
    }
  ASSERT_GE(cls[0], 0);
  std::array<std::vector<double>, 2> mean;
  std::array<double, 2> var{};
  std::array<std::size_t, 2> n{};
  for (auto& m : mean) m.assign(t.spec.d_feat, 0.0);
  for (std::size_t i = 0; i < t.test.size(); ++i)
    for (int c = 0; c < 2; ++c)
      if (t.test.hard_label(i) == cls[c]) {
        ++n[c];
        for (std::size_t j = 0; j < t.spec.d_feat; ++j) mean[c][j] += f(i, j);
      }
  for (int c = 0; c < 2; ++c)
    for (auto& v : mean[c]) v /= static_cast<double>(n[c]);
  // Spread is measured along the line joining the means, where it matters
  // for telling the two classes apart.
  double dist = 0.0;
  for (std::size_t j = 0; j < t.spec.d_feat; ++j) dist += std::pow(mean[0][j] - mean[1][j], 2);
  dist = std::sqrt(dist);
  for (std::size_t i = 0; i < t.test.size(); ++i)
    for (int c = 0; c < 2; ++c)
      if (t.test.hard_label(i) == cls[c]) {
        double proj = 0.0;
        for (std::size_t j = 0; j < t.spec.d_feat; ++j)
          proj += (f(i, j) - mean[c][j]) * (mean[1][j] - mean[0][j]) / dist;
        var[c] += proj * proj / static_cast<double>(n[c]);
      }
  const double within = std::sqrt(std::max(var[0], var[1]));
  EXPECT_GT(dist, 5.0 * within);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const ModelSpec s;
  const auto p = init_params<float>(s);
  std::stringstream ss;
  write_checkpoint(ss, s, p, 17);
  CheckpointHeader h;
  const auto back = read_checkpoint<float>(ss, s, &h);
  EXPECT_EQ(h.seed, 17u);
  for (std::size_t b = 0; b < kNumBlocks; ++b) EXPECT_EQ(back.layers[b].weight.vec(), p.layers[b].weight.vec());
  std::stringstream again;
  write_checkpoint(again, s, p, 17);
  ModelSpec other = s;
  other.d_feat = 8;
  EXPECT_THROW(read_checkpoint<float>(again, other), DataError);
}

}  // namespace
}  // namespace dfq::model
