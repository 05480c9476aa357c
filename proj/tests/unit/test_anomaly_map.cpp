// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "divad/analytic_backends.hpp"
#include "divad/anomaly_map.hpp"
#include "divad/dataset.hpp"
#include "divad/errors.hpp"
#include "divad/selftest/oracles.hpp"

using namespace divad;

namespace {

PatchFeatures random_features(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Tensor t({h, w, d});
  for (auto& v : t.values()) v = g(rng);
  return {t, 1};
}

Map random_map(std::uint64_t seed, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  Map m(h, w);
  for (auto& v : m.values) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("dissimilarity_map trivial cases") {
  const PatchFeatures f = random_features(1, 3, 4, 5);
  for (float v : dissimilarity_map(f, f).values) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));
  PatchFeatures neg = f;
  for (auto& v : neg.grid.values()) v = -v;
  for (float v : dissimilarity_map(f, neg).values) CHECK(v == doctest::Approx(2.0));

  PatchFeatures e1{Tensor({2, 2, 2}), 1}, e2{Tensor({2, 2, 2}), 1};
  for (std::size_t c = 0; c < 4; ++c) {
    e1.grid[c * 2] = 1.0;
    e2.grid[c * 2 + 1] = 1.0;
  }
  for (float v : dissimilarity_map(e1, e2).values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("dissimilarity_map zero-norm convention and errors") {
  PatchFeatures a = random_features(2, 2, 2, 3), b = a;
  for (std::size_t d = 0; d < 3; ++d) b.grid[d] = 0.0;
  const Map m = dissimilarity_map(a, b);
  CHECK(m.at(0, 0) == 0.0f);
  CHECK_THROWS_AS(dissimilarity_map(a, random_features(3, 2, 3, 3)), ContractError);
  CHECK_THROWS_AS(dissimilarity_map(a, random_features(3, 2, 2, 4)), ContractError);
}

TEST_CASE("dissimilarity_map is symmetric and scale invariant") {
  const PatchFeatures a = random_features(4, 4, 4, 6), b = random_features(5, 4, 4, 6);
  const Map ab = dissimilarity_map(a, b), ba = dissimilarity_map(b, a);
  PatchFeatures scaled = a;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (std::size_t c = 0; c < 16; ++c) {
    const double s = u(rng);
    for (std::size_t d = 0; d < 6; ++d) scaled.grid[c * 6 + d] *= s;
  }
  const Map sb = dissimilarity_map(scaled, b);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    CHECK(ab.values[i] == ba.values[i]);
    CHECK(sb.values[i] == doctest::Approx(ab.values[i]).epsilon(1e-5));
    CHECK(ab.values[i] >= 0.0f);
    CHECK(ab.values[i] <= 2.0f);
  }
}

TEST_CASE("upsample_bilinear against the direct interpolation oracle") {
  Map g(2, 2);
  g.at(0, 1) = 1.0f;
  g.at(1, 0) = 1.0f;
  const Map up = upsample_bilinear(g, 4, 4);
  const Map ref = oracle::bilinear_direct(g, 4, 4);
  for (std::size_t i = 0; i < up.size(); ++i) CHECK(up.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-7));
  CHECK(up.at(0, 0) == 0.0f);
  CHECK(up.at(0, 1) == doctest::Approx(0.25));
  CHECK(up.at(1, 1) == doctest::Approx(0.375));

  for (int seed = 0; seed < 20; ++seed) {
    const Map r = random_map(static_cast<std::uint64_t>(seed), 1 + seed % 5, 2 + seed % 3);
    const int oh = r.height * (1 + seed % 4) + seed % 3, ow = r.width * 3 + 1;
    const Map a = upsample_bilinear(r, oh, ow), b = oracle::bilinear_direct(r, oh, ow);
    const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));
      REQUIRE(a.values[i] >= *lo - 1e-6f);
      REQUIRE(a.values[i] <= *hi + 1e-6f);
    }
  }
}

TEST_CASE("upsample_bilinear trivial cases and errors") {
  const Map c(1, 1, 0.7f);
  for (float v : upsample_bilinear(c, 256, 256).values) REQUIRE(v == doctest::Approx(0.7f));
  const Map r = random_map(9, 3, 5);
  CHECK(upsample_bilinear(r, 3, 5).values == r.values);
  CHECK_THROWS_AS(upsample_bilinear(r, 0, 5), ContractError);
  CHECK_THROWS_AS(upsample_bilinear(r, 2, 5), ContractError);
}

TEST_CASE("apply_mask") {
  const Map m = random_map(10, 4, 4);
  CHECK(apply_mask(m, ObjectMask(4, 4, 1)).values == m.values);
  for (float v : apply_mask(m, ObjectMask(4, 4, 0)).values) CHECK(v == 0.0f);
  ObjectMask checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.at(y, x) = (x + y) % 2;
  const Map out = apply_mask(m, checker);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(y, x) == ((x + y) % 2 ? m.at(y, x) : 0.0f));
  CHECK_THROWS_AS(apply_mask(m, ObjectMask(4, 5, 1)), ContractError);
}

TEST_CASE("gaussian_smooth preserves constants and mass location") {
  const Map c(6, 7, 0.4f);
  for (float v : gaussian_smooth(c, 1.5).values) CHECK(v == doctest::Approx(0.4f));
  Map spike(9, 9);
  spike.at(4, 4) = 1.0f;
  const Map s = gaussian_smooth(spike, 1.0);
  CHECK(s.at(4, 4) < 1.0f);
  CHECK(s.at(4, 4) == s.max_value());
  CHECK(s.at(3, 4) == doctest::Approx(s.at(5, 4)));
  CHECK(gaussian_smooth(spike, 0.0).values == spike.values);
}

TEST_CASE("image_score reductions") {
  CHECK(image_score(Map(5, 5, 0.3f)) == doctest::Approx(0.3));
  Map spike(10, 10);
  spike.at(3, 7) = 1.7f;
  CHECK(image_score(spike) == doctest::Approx(1.7));
  // 200 values 0..199/100: top 1% is ceil(2) = 2 values, 1.99 and 1.98.
  Map ramp(10, 20);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp.values[i] = static_cast<float>(i) / 100.0f;
  CHECK(image_score(ramp, {ScoreReduction::top_k_mean, 0.01}) == doctest::Approx((1.99 + 1.98) / 2));
  // 150 values: ceil(1.5) = 2.
  Map r2(10, 15);
  for (std::size_t i = 0; i < r2.size(); ++i) r2.values[i] = static_cast<float>(i);
  CHECK(image_score(r2, {ScoreReduction::top_k_mean, 0.01}) == doctest::Approx((149.0 + 148.0) / 2));
  CHECK_THROWS_AS(image_score(Map()), ContractError);
  CHECK_THROWS_AS(image_score(ramp, {ScoreReduction::top_k_mean, 0.0}), ConfigError);
  CHECK(score_reduction_from_string(to_string(ScoreReduction::top_k_mean)) == ScoreReduction::top_k_mean);
  CHECK(prompt_mode_from_string("empty") == PromptMode::empty);
  CHECK(invert_extent_from_string("full") == InvertExtent::full);
  CHECK_THROWS_AS(prompt_mode_from_string("x"), ConfigError);
}

namespace {

struct Toy {
  NoiseSchedule schedule = build_schedule({});
  TimestepPlan plan = build_plan(1000, 50);
  IdentityAutoencoder ae;
  IdentityFeatures features;
};

class FailingSegmenter final : public ObjectSegmenter {
 public:
  ObjectMask segment(const Image&) const override { throw BackendError("/v1/objectmask", "down"); }
};

class BrokenFeatures final : public FeatureExtractor {
 public:
  PatchFeatures extract(const Image&) const override { throw DataError("bad image"); }
};

}  // namespace

TEST_CASE("score_image with an exact roundtrip yields an all-zero map") {
  Toy toy;
  const ConstantDenoiser d(0.3f);
  AnomalySpec spec;
  const SyntheticCorpus corpus = generate_synthetic(1, 2, 32, spec);
  const ClassConfig cls = default_class_config("bottle");
  const AnomalyResult r =
      score_image(corpus.images[0], cls, {&toy.ae, &d, &toy.features, nullptr}, toy.schedule, toy.plan, {});
  CHECK(r.map.height == 32);
  CHECK(r.image_score == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(r.map.max_value() <= 1e-6f);
  CHECK_FALSE(r.mask_applied);
  CHECK(r.t_prime == 10);
}

TEST_CASE("toy world: argmax of the map lies inside the injected square") {
  Toy toy;
  AnomalySpec spec;
  spec.anomaly_fraction = 1.0;
  const SyntheticCorpus corpus = generate_synthetic(5, 4, 64, spec);
  const GuidedGaussianDenoiser d(corpus.world, corpus.generic_world, toy.schedule);
  const ClassConfig cls = default_class_config(kSyntheticClass);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const AnomalyResult r =
        score_image(corpus.images[i], cls, {&toy.ae, &d, &toy.features, nullptr}, toy.schedule, toy.plan, {});
    const auto it = std::max_element(r.map.values.begin(), r.map.values.end());
    CHECK(corpus.gt_masks[i].pixels[static_cast<std::size_t>(it - r.map.values.begin())] == 1);
  }
}

TEST_CASE("object mask handling") {
  Toy toy;
  AnomalySpec spec;
  spec.anomaly_fraction = 1.0;
  const SyntheticCorpus corpus = generate_synthetic(2, 1, 32, spec);
  const GuidedGaussianDenoiser d(corpus.world, corpus.generic_world, toy.schedule);
  ObjectMask half(32, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) half.at(y, x) = 1;
  const FixedMaskSegmenter seg(half);
  ClassConfig cls = default_class_config("bottle");
  const AnomalyResult masked =
      score_image(corpus.images[0], cls, {&toy.ae, &d, &toy.features, &seg}, toy.schedule, toy.plan, {});
  CHECK(masked.mask_applied);
  CHECK(masked.masked_map.values == apply_mask(masked.map, half).values);
  CHECK(masked.image_score <= image_score(masked.map));

  cls.apply_object_mask = false;
  const AnomalyResult unmasked =
      score_image(corpus.images[0], cls, {&toy.ae, &d, &toy.features, &seg}, toy.schedule, toy.plan, {});
  CHECK_FALSE(unmasked.mask_applied);
  CHECK(unmasked.masked_map.values == unmasked.map.values);

  cls.apply_object_mask = true;
  const FailingSegmenter failing;
  const AnomalyResult fb =
      score_image(corpus.images[0], cls, {&toy.ae, &d, &toy.features, &failing}, toy.schedule, toy.plan, {});
  CHECK(fb.mask_applied);
  REQUIRE(fb.warnings.size() == 1);
  CHECK(fb.warnings[0].find("all-ones") != std::string::npos);
  CHECK(fb.masked_map.values == fb.map.values);
}

TEST_CASE("texture classes skip the mask by default") {
  CHECK_FALSE(default_class_config("carpet").apply_object_mask);
  CHECK(default_class_config("carpet").category == Category::texture);
  CHECK(default_class_config("bottle").apply_object_mask);
  CHECK(default_class_config("metal_nut").prompt_object_word == "metal nut");
}

TEST_CASE("stage failures name the stage") {
  Toy toy;
  const ConstantDenoiser d(0.0f);
  const BrokenFeatures broken;
  const Image img(8, 8, 3, 0.5f);
  try {
    score_image(img, default_class_config("x"), {&toy.ae, &d, &broken, nullptr}, toy.schedule, toy.plan, {});
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "features");
  }
  ScoringConfig bad;
  bad.t_prime = 51;
  CHECK_THROWS_AS(score_image(img, default_class_config("x"), {&toy.ae, &d, &toy.features, nullptr}, toy.schedule,
                              toy.plan, bad),
                  ConfigError);
  CHECK_THROWS_AS(score_image(img, default_class_config("x"), {&toy.ae, nullptr, &toy.features, nullptr},
                              toy.schedule, toy.plan, {}),
                  ContractError);
}

TEST_CASE("intermediates and summary") {
  Toy toy;
  const ConstantDenoiser d(0.0f);
  const Image img(8, 8, 3, 0.5f);
  ScoringConfig c;
  c.keep_intermediates = true;
  c.invert_extent = InvertExtent::full;
  const AnomalyResult r =
      score_image(img, default_class_config("x"), {&toy.ae, &d, &toy.features, nullptr}, toy.schedule, toy.plan, c);
  CHECK(r.t_prime == 50);
  REQUIRE(r.reconstruction);
  REQUIRE(r.patch_map);
  CHECK_FALSE(r.object_mask);
  const auto j = r.summary_json();
  CHECK(j.contains("image_score"));
  CHECK(j.contains("map_max"));
  CHECK(j.at("t_prime") == 50);
}
