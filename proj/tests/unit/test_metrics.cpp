// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "divad/errors.hpp"
#include "divad/metrics.hpp"
#include "divad/selftest/oracles.hpp"

using namespace divad;

namespace {
using Scores = std::vector<double>;
using Labels = std::vector<std::uint8_t>;
double roc(const Scores& s, const Labels& l) { return auroc(std::span<const double>(s), l); }
double ap(const Scores& s, const Labels& l) { return average_precision(std::span<const double>(s), l); }
double f1(const Scores& s, const Labels& l) { return f1_max(std::span<const double>(s), l); }
}  // namespace

TEST_CASE("auroc examples") {
  const Scores s = {0.1, 0.4, 0.35, 0.8};
  const Labels l = {0, 0, 1, 1};
  CHECK(roc(s, l) == oracle::auroc_pairs(s, l));
  CHECK(roc(s, l) == 0.75);
  CHECK(roc({1, 2, 3, 4}, {0, 0, 1, 1}) == 1.0);
  CHECK(roc(s, {1, 1, 0, 0}) == 1.0 - 0.75);
  CHECK(roc({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK_THROWS_AS(roc({1, 2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(roc({1, 2}, {1}), ContractError);
}

TEST_CASE("auroc complement identity is exact on random inputs") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 9);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 37);
    Scores s(n);
    Labels l(n), inv(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 3.0;
      l[i] = static_cast<std::uint8_t>(i == 0 ? 0 : i % 2 ? 1 : level(rng) % 2);
      inv[i] = l[i] ? 0 : 1;
    }
    REQUIRE(roc(s, l) + roc(s, inv) == 1.0);
  }
}

TEST_CASE("average precision examples") {
  CHECK(ap({0.9, 0.8, 0.1}, {1, 1, 0}) == 1.0);
  CHECK(ap({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == doctest::Approx(0.25));
  CHECK(ap({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(ap({0.1, 0.2}, {0, 0}), MetricError);
  const Scores s = {0.3, 0.9, 0.3, 0.5, 0.2, 0.9};
  const Labels l = {1, 0, 0, 1, 1, 1};
  CHECK(ap(s, l) == doctest::Approx(oracle::average_precision_exhaustive(s, l)).epsilon(1e-12));
}

TEST_CASE("average precision of random scores tracks prevalence") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    const std::size_t n = 20000;
    Scores s(n);
    Labels l(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      l[i] = u(rng) < 0.2 ? 1 : 0;
      pos += l[i];
    }
    worst = std::max(worst, std::abs(ap(s, l) - static_cast<double>(pos) / n));
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("f1_max examples") {
  CHECK(f1({0.9, 0.8, 0.1}, {1, 1, 0}) == 1.0);
  const Scores s = {0.9, 0.8, 0.7, 0.6, 0.1};
  const Labels l = {0, 0, 0, 0, 1};
  CHECK(f1(s, l) == doctest::Approx(oracle::f1_max_exhaustive(s, l)));
  CHECK(f1(s, l) == doctest::Approx(2.0 * (1.0 / 5) / (1.0 / 5 + 1.0)));
  CHECK(f1({0.3, 0.1, 0.7}, {1, 1, 1}) == 1.0);
  CHECK_THROWS_AS(f1({0.1}, {0}), MetricError);
}

TEST_CASE("pro examples") {
  ObjectMask gt(8, 8);
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 6; ++x) gt.at(y, x) = 1;
  Map perfect(8, 8);
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) perfect.values[i] = gt.pixels[i];
  CHECK(pro_score({perfect}, {gt}) == doctest::Approx(1.0));

  // Constant map: one threshold takes (fpr, overlap) from (0, 0) to (1, 1);
  // the capped area is 0.3^2 / 2, normalised by 0.3.
  const Map flat(8, 8, 0.4f);
  CHECK(pro_score({flat}, {gt}) == doctest::Approx(0.15));
  CHECK(oracle::pro_exhaustive({flat}, {gt}) == doctest::Approx(0.15));

  // Two regions: one always hit before any false positive, one never.
  ObjectMask two(8, 8);
  two.at(0, 0) = 1;
  two.at(7, 7) = 1;
  Map m(8, 8, 0.5f);
  m.at(0, 0) = 1.0f;
  m.at(7, 7) = 0.0f;
  const double p = pro_score({m}, {two});
  CHECK(p == doctest::Approx(oracle::pro_exhaustive({m}, {two})).epsilon(1e-12));
  CHECK(p == doctest::Approx(0.5));

  CHECK_THROWS_AS(pro_score({flat}, {ObjectMask(8, 8)}), MetricError);
  CHECK_THROWS_AS(pro_score({flat}, {ObjectMask(8, 8, 1)}), MetricError);
  CHECK_THROWS_AS(pro_score({flat}, {ObjectMask(4, 8)}), ContractError);
}

TEST_CASE("8-connectivity joins diagonal neighbours") {
  ObjectMask m(3, 3);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  m.at(2, 0) = 1;
  m.at(0, 2) = 1;
  std::vector<int> labels;
  CHECK(label_components(m, labels) == 1);
  ObjectMask apart(3, 3);
  apart.at(0, 0) = 1;
  apart.at(2, 2) = 1;
  apart.at(0, 2) = 1;
  CHECK(label_components(apart, labels) == 3);
}

TEST_CASE("metric oracle equivalence on random pooled instances") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u;
  for (int k = 0; k < 60; ++k) {
    const int n = 1 + k % 6, h = 2 + k % 7, w = 3 + k % 5;
    std::vector<Map> maps;
    std::vector<ObjectMask> masks;
    for (int i = 0; i < n; ++i) {
      ObjectMask gt(h, w);
      Map m(h, w);
      for (std::size_t p = 0; p < gt.pixels.size(); ++p) {
        gt.pixels[p] = u(rng) < 0.25 ? 1 : 0;
        m.values[p] = static_cast<float>(std::round((u(rng) + 0.5 * gt.pixels[p]) * (k % 2 ? 8 : 1000)));
      }
      maps.push_back(m);
      masks.push_back(gt);
    }
    masks[0].pixels[0] = 1;
    masks[0].pixels[1] = 0;
    Scores s;
    Labels l;
    for (int i = 0; i < n; ++i)
      for (std::size_t p = 0; p < maps[static_cast<std::size_t>(i)].size(); ++p) {
        s.push_back(maps[static_cast<std::size_t>(i)].values[p]);
        l.push_back(masks[static_cast<std::size_t>(i)].pixels[p]);
      }
    REQUIRE(roc(s, l) == doctest::Approx(oracle::auroc_pairs(s, l)).epsilon(1e-12));
    REQUIRE(ap(s, l) == doctest::Approx(oracle::average_precision_exhaustive(s, l)).epsilon(1e-12));
    REQUIRE(f1(s, l) == doctest::Approx(oracle::f1_max_exhaustive(s, l)).epsilon(1e-12));
    REQUIRE(pro_score(maps, masks) == doctest::Approx(oracle::pro_exhaustive(maps, masks)).epsilon(1e-12));
  }
}

namespace {

EvalSample sample(const std::string& id, const std::string& cls, Label label, double score, Map map,
                  std::optional<ObjectMask> mask) {
  return {id, cls, label, score, std::move(map), std::move(mask)};
}

}  // namespace

TEST_CASE("evaluate: degenerate two-image class scores 1.0 everywhere") {
  ObjectMask gt(4, 4);
  gt.at(1, 1) = 1;
  gt.at(1, 2) = 1;
  Map am(4, 4);
  am.at(1, 1) = 1.0f;
  am.at(1, 2) = 1.0f;
  const std::vector<EvalSample> samples = {sample("n", "c", Label::normal, 0.0, Map(4, 4), std::nullopt),
                                           sample("a", "c", Label::anomaly, 1.0, am, gt)};
  const MetricsReport r = evaluate(samples);
  const MetricSet& m = r.per_class.at("c");
  CHECK(m.roc_i == 1.0);
  CHECK(m.roc_p == 1.0);
  CHECK(m.pro == doctest::Approx(1.0));
  CHECK(m.ap_p == 1.0);
  CHECK(m.f1_p == 1.0);
  CHECK(r.mean.roc_p == 1.0);
}

TEST_CASE("evaluate: missing mask, class means and permutation invariance") {
  CHECK_THROWS_WITH_AS(evaluate({sample("bad_one", "c", Label::anomaly, 1.0, Map(2, 2), std::nullopt)}),
                       doctest::Contains("bad_one"), DataError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u;
  std::vector<EvalSample> samples;
  for (int i = 0; i < 12; ++i) {
    const bool anomalous = i % 3 == 0;
    ObjectMask gt(4, 4);
    Map m(4, 4);
    for (std::size_t p = 0; p < m.size(); ++p) {
      gt.pixels[p] = anomalous && p % 5 == 0 ? 1 : 0;
      m.values[p] = u(rng) + gt.pixels[p] * 0.5f;
    }
    samples.push_back(sample("s" + std::to_string(i), i % 2 ? "a" : "b", anomalous ? Label::anomaly : Label::normal,
                             u(rng) + (anomalous ? 0.3 : 0.0), m,
                             anomalous ? std::optional<ObjectMask>(gt) : std::nullopt));
  }
  const MetricsReport r = evaluate(samples);
  REQUIRE(r.per_class.size() == 2);
  CHECK(r.mean.roc_i == doctest::Approx((r.per_class.at("a").roc_i + r.per_class.at("b").roc_i) / 2));
  CHECK(r.mean.pro == doctest::Approx((r.per_class.at("a").pro + r.per_class.at("b").pro) / 2));
  std::shuffle(samples.begin(), samples.end(), rng);
  const MetricsReport r2 = evaluate(samples);
  CHECK(r2.to_json() == r.to_json());
  CHECK(MetricsReport::from_json(r.to_json()).to_json() == r.to_json());

  const std::string table = r.table();
  CHECK(table.find("ROC_I") != std::string::npos);
  CHECK(table.find("F1_P") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
}
