// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "divad/analytic_backends.hpp"
#include "divad/errors.hpp"

using namespace divad;

TEST_CASE("closed form: mu = 0, sigma = 1 gives sqrt(1 - abar) z") {
  const NoiseSchedule s = build_schedule({});
  const TimestepPlan plan = build_plan(1000, 50);
  const GaussianWorldModel w = GaussianWorldModel::uniform({2, 3, 3}, 0.0f, 1.0f);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int t : plan.base_indices()) {
    Tensor z({2, 3, 3});
    for (auto& v : z.values()) v = g(rng);
    const Tensor eps = analytic_gaussian_eps(z, Timestep::at(t), w, s);
    const double k = std::sqrt(1.0 - s.alpha_bar(Timestep::at(t)));
    for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(std::abs(eps[i] - k * z[i]) <= 1e-6);
  }
}

TEST_CASE("analytic eps is the posterior-mean noise for a general world") {
  const NoiseSchedule s = build_schedule({});
  const Tensor mu({1}, 2.0), sd({1}, 0.5);
  const GaussianWorldModel w(mu, sd);
  const Timestep t = Timestep::at(300);
  const double a = s.alpha_bar(t);
  const Tensor z({1}, 1.3);
  // Independent derivation via the joint Gaussian of (x0, z_t).
  const double cov = std::sqrt(a) * 0.25, var_z = a * 0.25 + (1 - a);
  const double x0 = 2.0 + cov / var_z * (1.3 - std::sqrt(a) * 2.0);
  const double expected = (1.3 - std::sqrt(a) * x0) / std::sqrt(1 - a);
  CHECK(analytic_gaussian_eps(z, t, w, s)[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("world and eps errors") {
  CHECK_THROWS_AS(GaussianWorldModel(Tensor({2}, 0.0), Tensor({3}, 1.0)), ContractError);
  CHECK_THROWS_AS(GaussianWorldModel(Tensor({2}, 0.0), Tensor({2}, 0.0)), ContractError);
  const NoiseSchedule s = build_schedule({});
  const auto w = GaussianWorldModel::uniform({2}, 0.0f, 1.0f);
  CHECK_THROWS_AS(analytic_gaussian_eps(Tensor({2}), Timestep::clean(), w, s), ContractError);
  CHECK_THROWS_AS(analytic_gaussian_eps(Tensor({3}), Timestep::at(1), w, s), ContractError);
}

TEST_CASE("guided denoiser distinguishes conditional and unconditional calls") {
  const NoiseSchedule s = build_schedule({});
  const auto cond = GaussianWorldModel::uniform({1, 2, 2}, 0.8f, 0.05f);
  const auto uncond = GaussianWorldModel::uniform({1, 2, 2}, 0.5f, 0.5f);
  const GuidedGaussianDenoiser d(cond, uncond, s);
  const Tensor z({1, 2, 2}, 0.3);
  const Tensor ec = d.predict_eps(z, 100, std::string("p"));
  const Tensor eu = d.predict_eps(z, 100, std::nullopt);
  CHECK(ec == analytic_gaussian_eps(z, Timestep::at(100), cond, s));
  CHECK(eu == analytic_gaussian_eps(z, Timestep::at(100), uncond, s));
  CHECK(ec[0] != eu[0]);
  CHECK(d.info().num_base_steps == 1000);

  const GaussianDenoiser plain(cond, s);
  CHECK(plain.predict_eps(z, 100, std::string("x")) == plain.predict_eps(z, 100, std::nullopt));
}

TEST_CASE("constant denoiser") {
  const ConstantDenoiser d(0.25f, 1000);
  const Tensor e = d.predict_eps(Tensor({2, 2}, 9.0), 5, std::nullopt);
  for (double v : e.values()) CHECK(v == 0.25);
  CHECK(constant_eps(Tensor({3}), 0, -1.0f)[2] == -1.0);
}

TEST_CASE("identity autoencoder roundtrips and uses (C, H, W) layout") {
  Image img(2, 3, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i) / 17.0f;
  const IdentityAutoencoder ae;
  const Tensor z = ae.encode(img);
  CHECK(z.shape() == std::vector<std::size_t>{3, 2, 3});
  CHECK(z[(1 * 2 + 1) * 3 + 2] == img.at(1, 2, 1));
  const Image back = ae.decode(z);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(ae.decode(Tensor({2, 2})), ContractError);
}

TEST_CASE("feature extractors") {
  Image img(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(y * 4 + x + k);
  const PatchFeatures id = identity_features(img);
  CHECK(id.grid_h() == 4);
  CHECK(id.feature_dim() == 3);
  CHECK(id.grid[(2 * 4 + 1) * 3 + 2] == img.at(2, 1, 2));
  const PatchFeatures mp = mean_pool_features(img, 2);
  CHECK(mp.grid_h() == 2);
  CHECK(mp.patch_size == 2);
  CHECK(mp.grid[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK_THROWS_AS(mean_pool_features(img, 3), ContractError);
  CHECK_THROWS_AS(mean_pool_features(img, 0), ContractError);
}

TEST_CASE("fixed mask segmenter checks geometry") {
  const FixedMaskSegmenter seg(ObjectMask(4, 4, 1));
  CHECK(seg.segment(Image(4, 4, 3)).count() == 16);
  CHECK_THROWS_AS(seg.segment(Image(5, 4, 3)), ContractError);
}
