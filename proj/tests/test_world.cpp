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

#include "dfqlab/diagnostics/fid.hpp"
#include "dfqlab/numerics/stats.hpp"
#include "dfqlab/vocab/prompts.hpp"
#include "dfqlab/world/augment.hpp"
#include "dfqlab/world/labeled_set_io.hpp"
#include "dfqlab/world/world.hpp"
#include "test_util.hpp"

namespace dfq::world {
namespace {

WorldSpec small_spec(std::vector<double> bias, std::uint64_t seed = 0) {
  WorldSpec s;
  s.seed = seed;
  s.polysemy_bias = bias;
  for (double b : bias) s.meanings_per_class.push_back(b > 0.0 ? 2 : 1);
  return s;
}

vocab::PromptRecord record(vocab::PromptStrategy st, std::vector<int> ids, std::uint64_t seed = 0) {
  vocab::PromptRecord r;
  r.strategy = st;
  r.class_ids = std::move(ids);
  r.seed = seed;
  return r;
}

std::vector<double> pixel_mean(const LabeledSet& s) {
  std::vector<double> m(s.images.size() / s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t p = 0; p < m.size(); ++p) m[p] += s.images.row(i)[p];
  for (auto& v : m) v /= static_cast<double>(s.size());
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<float>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// 4x4 block means of 16x16 images: a fixed 16-dim feature map.
TensorD pooled(const LabeledSet& s) {
  TensorD f({s.size(), 16});
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto img = s.images.row(i);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) f(i, (y / 4) * 4 + x / 4) += img[y * 16 + x] / 16.0;
  }
  return f;
}

TEST(WorldSpec, Validation) {
  EXPECT_NO_THROW(validate(small_spec({0.0, 0.5})));
  auto bad = small_spec({0.0});
  bad.lambda_lo = 0.0;
  EXPECT_THROW(validate(bad), ConfigError);
  auto bias = small_spec({1.2});
  bias.meanings_per_class = {2};
  EXPECT_THROW(validate(bias), ConfigError);
  auto missing = small_spec({0.5});
  missing.meanings_per_class = {1};
  EXPECT_THROW(validate(missing), ConfigError);
}

TEST(World, PrototypesDeterministicAndInRange) {
  const World a(small_spec({0.0, 0.8}, 3)), b(small_spec({0.0, 0.8}, 3));
  EXPECT_EQ(a.prototype(1, 1), b.prototype(1, 1));
  EXPECT_NE(a.prototype(0, 0), a.prototype(1, 0));
  EXPECT_NE(a.prototype(1, 0), a.prototype(1, 1));
  for (float p : a.prototype(1, 1)) {
    EXPECT_GE(p, 0.0f);
    EXPECT_LE(p, 1.0f);
  }
}

TEST(SampleReal, NoiseFreeEqualsPrototype) {
  auto spec = small_spec({0.0, 0.0});
  spec.noise_sigma = 0.0;
  const World w(spec);
  RngStream rng(1, 1);
  const auto s = sample_real(w, 1, 5, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto row = s.images.row(i);
    EXPECT_TRUE(std::equal(row.begin(), row.end(), w.prototype(1).begin()));
    EXPECT_EQ(s.hard_label(i), 1);
  }
}

TEST(SampleReal, DisjointSeedsAgreeInMean) {
  const World w(small_spec({0.0, 0.0}));
  RngStream r1(1, 0), r2(2, 0);
  const std::size_t n = 400;
  const auto a = sample_real(w, 0, n, r1), b = sample_real(w, 0, n, r2);
  EXPECT_NE(a.images.vec(), b.images.vec());
  const auto ma = pixel_mean(a), mb = pixel_mean(b);
  // Clamping to [0, 1] only shrinks the spread, so 3 sigma / sqrt(n) per
  // sample mean, two means, stays a valid bound.
  const double tol = 2.0 * 3.0 * w.spec().noise_sigma / std::sqrt(static_cast<double>(n));
  for (std::size_t p = 0; p < ma.size(); ++p) EXPECT_NEAR(ma[p], mb[p], tol) << p;
}

TEST(SampleReal, Errors) {
  const World w(small_spec({0.0}));
  RngStream rng;
  EXPECT_THROW(sample_real(w, 0, 0, rng), PreconditionError);
  EXPECT_THROW(sample_real(w, 3, 1, rng), PreconditionError);
}

TEST(RenderPrompt, FullBiasRendersOffDistribution) {
  const World w(small_spec({1.0, 0.0}));
  std::vector<Sample> samples;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    RngStream rng(i, kRenderStream);
    samples.push_back(render_prompt(w, record(vocab::PromptStrategy::kSingle, {0}), rng));
  }
  std::vector<double> mean(w.spec().pixels(), 0.0);
  for (const auto& s : samples) {
    EXPECT_EQ(s.off_distribution_components, 1);
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += s.image[p] / 1000.0;
  }
  EXPECT_LT(max_abs_diff(mean, w.prototype(0, 1)), 0.05);
  EXPECT_GT(max_abs_diff(mean, w.prototype(0, 0)), 0.05);
}

TEST(RenderPrompt, ZeroBiasMatchesRealDistribution) {
  const World w(small_spec({0.0, 0.0}));
  std::vector<vocab::PromptRecord> recs;
  for (std::uint64_t i = 0; i < 2000; ++i) recs.push_back(record(vocab::PromptStrategy::kSingle, {1}, i));
  const auto syn = render_manifest(w, recs);
  RngStream rng(77, 0);
  const auto real = sample_real(w, 1, 2000, rng);
  const auto ss = gaussian_stats(pooled(syn)), sr = gaussian_stats(pooled(real));
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_NEAR(ss.mean[j], sr.mean[j], 0.01);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(ss.cov(j, k), sr.cov(j, k), 0.002);
  }
}

TEST(RenderPrompt, ForcedHalfRatioGivesEvenLabel) {
  auto spec = small_spec({0.0, 0.0, 0.0});
  spec.lambda_lo = spec.lambda_hi = 0.5;
  const World w(spec);
  for (std::uint64_t i = 0; i < 20; ++i) {
    RngStream rng(i, 0);
    const auto s = render_prompt(w, record(vocab::PromptStrategy::kMixup, {0, 2}), rng);
    EXPECT_FLOAT_EQ(s.soft_label[0], 0.5f);
    EXPECT_FLOAT_EQ(s.soft_label[2], 0.5f);
    EXPECT_FLOAT_EQ(s.soft_label[1], 0.0f);
  }
}

TEST(RenderPrompt, SoftLabelsAreDistributions) {
  const World w(small_spec({0.0, 0.8, 0.0, 0.3}));
  for (std::uint64_t i = 0; i < 300; ++i) {
    RngStream rng(i, 1);
    const auto s = render_prompt(
        w, record(vocab::PromptStrategy::kNClass, i % 2 ? std::vector<int>{0, 1, 2, 3} : std::vector<int>{3, 1, 0}),
        rng);
    double total = 0.0;
    for (float v : s.soft_label) {
      EXPECT_GE(v, 0.0f);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    for (float p : s.image) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
}

TEST(RenderPrompt, UnknownClass) {
  const World w(small_spec({0.0}));
  RngStream rng;
  EXPECT_THROW(render_prompt(w, record(vocab::PromptStrategy::kSingle, {4}), rng),
               PreconditionError);
}

TEST(RenderManifest, DeterministicAndOrderIndependent) {
  const World w(spec_from_vocabulary(vocab::default_vocabulary()));
  const auto recs = vocab::gen_mixup_class(vocab::default_vocabulary(), vocab::default_templates(),
                                           64, {}, RngStream(3, 3));
  const auto a = render_manifest(w, recs), b = render_manifest(w, recs);
  EXPECT_EQ(a.images.vec(), b.images.vec());
  EXPECT_EQ(a.provenance, Provenance::kSyntheticMixup);
  auto reversed = recs;
  std::reverse(reversed.begin(), reversed.end());
  const auto c = render_manifest(w, reversed);
  const auto last = c.images.row(63), first = a.images.row(0);
  EXPECT_TRUE(std::equal(first.begin(), first.end(), last.begin()));
}

TEST(RenderManifest, CleanClassStatisticsConvergeToReal) {
  const World w(spec_from_vocabulary(vocab::default_vocabulary()));
  const int cls = 3;  // not polysemous
  const std::size_t n = 512;
  const auto recs =
      vocab::gen_single_class_for(vocab::default_vocabulary(), vocab::default_templates(), cls, n,
                                  RngStream(5, 0));
  const auto syn = render_manifest(w, recs);
  RngStream r1(10, 0), r2(11, 0);
  const auto real_a = sample_real(w, cls, n, r1), real_b = sample_real(w, cls, n, r2);
  const double fid_syn = diag::fid(gaussian_stats(pooled(real_a)), gaussian_stats(pooled(syn)));
  const double fid_real = diag::fid(gaussian_stats(pooled(real_a)), gaussian_stats(pooled(real_b)));
  EXPECT_LT(fid_syn, 2.0 * fid_real);
}

LabeledSet two_real(const World& w) {
  RngStream rng(1, 1);
  return concat({sample_real(w, 0, 3, rng), sample_real(w, 1, 3, rng)});
}

TEST(Augment, MixupUnitLambdaIsIdentity) {
  const World w(small_spec({0.0, 0.0}));
  const auto set = two_real(w);
  RngStream rng(2, 2);
  AugmentConfig cfg;
  cfg.fixed_lambda = 1.0;
  const auto out = augment(set, AugmentKind::kMixupPixels, rng, cfg);
  EXPECT_EQ(out.images.vec(), set.images.vec());
  EXPECT_EQ(out.soft_labels.vec(), set.soft_labels.vec());
  EXPECT_EQ(out.provenance, Provenance::kAugmented);
}

TEST(Augment, FullCutMixCopiesPartner) {
  const World w(small_spec({0.0, 0.0}));
  LabeledSet set;
  {
    RngStream rng(1, 1);
    set = concat({sample_real(w, 0, 1, rng), sample_real(w, 1, 1, rng)});
  }
  RngStream rng(3, 3);
  AugmentConfig cfg;
  cfg.fixed_lambda = 0.0;
  const auto out = augment(set, AugmentKind::kCutMix, rng, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto src = set.images.row(1 - i);
    const auto dst = out.images.row(i);
    EXPECT_TRUE(std::equal(src.begin(), src.end(), dst.begin()));
    EXPECT_EQ(out.hard_label(i), static_cast<int>(1 - i));
    EXPECT_FLOAT_EQ(out.soft_labels(i, 1 - i), 1.0f);
  }
}

TEST(Augment, LabelsSumToOneAndPixelsClamped) {
  const World w(small_spec({0.0, 0.0, 0.0}));
  RngStream src(4, 4);
  const auto set = concat({sample_real(w, 0, 20, src), sample_real(w, 1, 20, src),
                           sample_real(w, 2, 20, src)});
  for (auto kind : {AugmentKind::kMixupPixels, AugmentKind::kCutMix, AugmentKind::kResizeMix}) {
    RngStream rng(5, 5);
    const auto out = augment(set, kind, rng);
    for (std::size_t i = 0; i < out.size(); ++i) {
      double total = 0.0;
      for (float v : out.soft_labels.row(i)) {
        EXPECT_GE(v, 0.0f);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-6) << to_string(kind);
    }
    for (float p : out.images.vec()) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
}

TEST(Augment, ResizeMixAreaLabel) {
  const World w(small_spec({0.0, 0.0}));
  const auto set = two_real(w);
  RngStream rng(6, 6);
  AugmentConfig cfg;
  cfg.fixed_lambda = 0.5;  // 8x8 patch of 16x16
  const auto out = augment(set, AugmentKind::kResizeMix, rng, cfg);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float top = 0.0f;
    for (float v : out.soft_labels.row(i)) top = std::max(top, v);
    EXPECT_TRUE(top == 1.0f || std::abs(top - 0.75f) < 1e-6f) << top;
  }
}

TEST(Augment, NeedsTwoSamples) {
  const World w(small_spec({0.0}));
  RngStream rng;
  const auto one = sample_real(w, 0, 1, rng);
  EXPECT_THROW(augment(one, AugmentKind::kCutMix, rng), PreconditionError);
}

TEST(Augment, BilinearResizeOfConstantIsConstant) {
  std::vector<float> img(16 * 16, 0.3f);
  for (float v : resize_bilinear(img, 16, 16, 5, 7)) EXPECT_FLOAT_EQ(v, 0.3f);
  const auto same = resize_bilinear(img, 16, 16, 16, 16);
  EXPECT_EQ(same, img);
}

TEST(LabeledSetIo, RoundTrip) {
  testing::TempDir dir;
  const World w(spec_from_vocabulary(vocab::default_vocabulary()));
  const auto recs = vocab::gen_nclass(vocab::default_vocabulary(), vocab::default_templates(), 20,
                                      3, RngStream(1, 1));
  const auto set = render_manifest(w, recs);
  save_labeled_set(dir.str("s"), set, {config_hash(w.spec()), 9});
  SetMetadata meta;
  const auto back = load_labeled_set(dir.str("s"), &meta);
  EXPECT_EQ(back.images.vec(), set.images.vec());
  EXPECT_EQ(back.soft_labels.vec(), set.soft_labels.vec());
  EXPECT_EQ(back.class_ids, set.class_ids);
  EXPECT_EQ(back.provenance, Provenance::kSyntheticNClass);
  EXPECT_EQ(meta.seed, 9u);
  EXPECT_EQ(meta.world_hash, config_hash(w.spec()));
}

}  // namespace
}  // namespace dfq::world
