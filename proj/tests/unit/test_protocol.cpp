// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <bit>
#include <random>
#include <thread>

#include <httplib.h>

#include "divad/analytic_backends.hpp"
#include "divad/anomaly_map.hpp"
#include "divad/dataset.hpp"
#include "divad/errors.hpp"
#include "divad/image_io.hpp"
#include "divad/remote.hpp"
#include "divad/stub_server.hpp"
#include "divad/tensor_blob.hpp"

using namespace divad;

namespace {

StubConfig small_stub() {
  StubConfig c;
  c.image_side = 64;
  c.latent_factor = 4;
  c.patch_size = 8;
  c.world_mean = 0.25f;
  c.world_std = 0.75f;
  return c;
}

struct Fixture {
  StubServer server{small_stub()};
  std::shared_ptr<RemoteClient> client;
  Fixture() {
    server.start();
    client = std::make_shared<RemoteClient>(RemoteOptions{server.url(), 4, 30.0});
  }
};

Image random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> byte(0, 255);
  Image img(h, w, 3);
  for (auto& v : img.pixels) v = static_cast<float>(byte(rng)) / 255.0f;
  return img;
}

Tensor random_latent(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::normal_distribution<double> g;
  Tensor t({3, h, w});
  for (auto& v : t.values()) v = static_cast<float>(g(rng));
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

// What the stub computes for /v1/eps, narrowed as the wire does.
Tensor expected_eps(const Tensor& latent, int t, const StubConfig& c, const NoiseSchedule& s) {
  const auto world = GaussianWorldModel::uniform(latent.shape(), c.world_mean, c.world_std);
  return decode_blob(encode_blob(analytic_gaussian_eps(latent, Timestep::at(t), world, s)));
}

}  // namespace

TEST_CASE("info") {
  Fixture f;
  const ServerInfo i = f.client->info();
  CHECK(i.latent_channels == 3);
  CHECK(i.latent_side == 16);
  CHECK(i.num_base_steps == 1000);
  CHECK(i.patch_size == 8);
  CHECK(i.protocol_version == kProtocolVersion);
  CHECK(i.models.contains("denoiser"));
  CHECK(ServerInfo::from_json(i.to_json()).to_json() == i.to_json());
}

TEST_CASE("every endpoint round-trips") {
  Fixture f;
  std::mt19937_64 rng(1);
  const Image img = random_image(rng, 64, 64);
  const std::string png = encode_png(img);

  const Tensor latent = f.client->encode(png);
  REQUIRE(latent.shape() == std::vector<std::size_t>{3, 16, 16});
  const PatchFeatures pooled = mean_pool_features(decode_image(png), 4);
  Tensor local({3, 16, 16});
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        local[(k * 16 + y) * 16 + x] = 2.0f * pooled.grid[(y * 16 + x) * 3 + k] - 1.0f;
  CHECK(bit_equal(latent, decode_blob(encode_blob(local))));

  const Image back = decode_image(f.client->decode(latent));
  CHECK(back.height == 64);
  CHECK(back.channels == 3);
  for (int y = 0; y < 64; ++y)
    for (int k = 0; k < 3; ++k)
      REQUIRE(back.at(y, 5, k) == doctest::Approx(0.5 * (latent[(k * 16 + y / 4) * 16 + 1] + 1)).epsilon(0.003));

  const PatchFeatures feats = f.client->features(png);
  CHECK(feats.patch_size == 8);
  CHECK(bit_equal(feats.grid, decode_blob(encode_blob(mean_pool_features(decode_image(png), 8).grid))));

  const ObjectMask m = f.client->object_mask(png, 0.1);
  CHECK(m.height == 64);
  CHECK(m.count() == m.pixels.size());

  const Tensor eps = f.client->predict_eps(latent, 981, std::string("a photo of a bottle"));
  CHECK(bit_equal(eps, expected_eps(latent, 981, f.server.config(), build_schedule({}))));
}

TEST_CASE("stub eps agrees with the closed-form denoiser") {
  Fixture f;
  std::mt19937_64 rng(2);
  const NoiseSchedule s = build_schedule({});
  const Tensor z = random_latent(rng, 16, 16);
  const auto world = GaussianWorldModel::uniform(z.shape(), 0.25f, 0.75f);
  for (int t : {1, 101, 501, 981}) {
    const Tensor remote = f.client->predict_eps(z, t, std::nullopt);
    const Tensor local = analytic_gaussian_eps(z, Timestep::at(t), world, s);
    for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(remote[i] == doctest::Approx(local[i]).epsilon(1e-5));
  }
}

TEST_CASE("1000 randomized payloads are bit-exact") {
  Fixture f;
  const NoiseSchedule s = build_schedule({});
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> side(1, 12), t_d(0, 999), coin(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const Tensor z = random_latent(rng, static_cast<std::size_t>(side(rng)), static_cast<std::size_t>(side(rng)));
    const int t = t_d(rng);
    const auto prompt = coin(rng) ? std::optional<std::string>("a photo of a " + std::to_string(k)) : std::nullopt;
    REQUIRE(bit_equal(f.client->predict_eps(z, t, prompt), expected_eps(z, t, f.server.config(), s)));
  }
}

TEST_CASE("concurrent callers share the pool") {
  Fixture f;
  const NoiseSchedule s = build_schedule({});
  std::atomic<int> bad{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      std::mt19937_64 rng(100 + static_cast<std::uint64_t>(w));
      for (int k = 0; k < 25; ++k) {
        const Tensor z = random_latent(rng, 8, 8);
        if (!bit_equal(f.client->predict_eps(z, 10 * k, std::nullopt), expected_eps(z, 10 * k, f.server.config(), s)))
          ++bad;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(bad == 0);
}

TEST_CASE("server-side rejections carry the status") {
  Fixture f;
  httplib::Client raw(f.server.url());
  const auto bad_blob = raw.Post("/v1/eps", encode_frame({{"t", 5}}, "junk"), "application/octet-stream");
  REQUIRE(bad_blob);
  CHECK(bad_blob->status == 400);
  CHECK(nlohmann::json::parse(bad_blob->body).contains("error"));
  const auto no_t = raw.Post("/v1/eps", encode_frame({{"prompt", nullptr}}, encode_blob(Tensor({3, 2, 2}))),
                             "application/octet-stream");
  CHECK(no_t->status == 400);
  const auto bad_t = raw.Post("/v1/eps", encode_frame({{"t", 1000}}, encode_blob(Tensor({3, 2, 2}))),
                              "application/octet-stream");
  CHECK(bad_t->status == 400);
  CHECK(raw.Post("/v1/encode", "not a png", "application/octet-stream")->status == 400);
  CHECK(raw.Post("/v1/objectmask?threshold=2", encode_png(Image(4, 4, 3)), "image/png")->status == 400);
  CHECK(raw.Get("/v1/nothing")->status == 404);

  try {
    f.client->encode(encode_png(Image(10, 10, 3)));
    FAIL("expected ServerError");
  } catch (const ServerError& e) {
    CHECK(e.status() == 400);
    CHECK(std::string(e.what()).find("divisible") != std::string::npos);
  }
  CHECK_THROWS_AS(f.client->decode(Tensor({2, 4, 4})), ServerError);
}

TEST_CASE("client-side protocol checks") {
  httplib::Server fake;
  fake.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"latent_channels":3,"latent_side":8,"num_base_steps":1000,"patch_size":8,"models":{},"protocol_version":2})",
                    "application/json");
  });
  fake.Post("/v1/eps", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(encode_blob(Tensor({3, 1, 1})), "application/octet-stream");
  });
  fake.Post("/v1/features", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(encode_frame({{"size", 8}}, encode_blob(Tensor({2, 2, 4}))), "application/octet-stream");
  });
  const int port = fake.bind_to_any_port("127.0.0.1");
  std::thread th([&] { fake.listen_after_bind(); });
  fake.wait_until_ready();
  {
    const RemoteClient c({"http://127.0.0.1:" + std::to_string(port), 2, 10.0});
    CHECK_THROWS_WITH_AS(c.info(), doctest::Contains("protocol version"), ProtocolError);
    CHECK_THROWS_WITH_AS(c.predict_eps(Tensor({3, 2, 2}), 1, std::nullopt), doctest::Contains("differs"),
                         ProtocolError);
    CHECK_THROWS_WITH_AS(c.features("x"), doctest::Contains("patch_size"), ProtocolError);
  }
  fake.stop();
  th.join();
}

TEST_CASE("unreachable server raises ConnectionError") {
  StubServer s(small_stub());
  const int port = s.start();
  s.stop();
  const RemoteClient c({"http://127.0.0.1:" + std::to_string(port), 1, 2.0});
  CHECK_THROWS_AS(c.info(), ConnectionError);
  CHECK_THROWS_AS(RemoteClient({"", 1, 1.0}), ConfigError);
}

TEST_CASE("restarted servers answer identically") {
  std::mt19937_64 rng(9);
  const Tensor z = random_latent(rng, 6, 6);
  const std::string png = encode_png(random_image(rng, 32, 32));
  std::vector<std::string> answers;
  for (int r = 0; r < 2; ++r) {
    Fixture f;
    answers.push_back(encode_blob(f.client->predict_eps(z, 321, std::nullopt)) +
                      encode_blob(f.client->features(png).grid) + f.client->decode(z));
  }
  CHECK(answers[0] == answers[1]);
}

TEST_CASE("remote backends drive the scoring pipeline") {
  Fixture f;
  const RemoteAutoencoder ae(f.client);
  const RemoteDenoiser d(f.client);
  const RemoteFeatures feats(f.client);
  const RemoteSegmenter seg(f.client, 0.1);
  CHECK(d.info().latent_side == 16);
  std::mt19937_64 rng(4);
  const Image img = random_image(rng, 64, 64);
  const NoiseSchedule s = build_schedule({});
  ScoringConfig c;
  c.t_prime = 3;
  c.keep_intermediates = true;
  const AnomalyResult r =
      score_image(img, default_class_config("bottle"), {&ae, &d, &feats, &seg}, s, build_plan(1000, 10), c);
  CHECK(r.map.height == 64);
  CHECK(r.mask_applied);
  REQUIRE(r.patch_map);
  CHECK(r.patch_map->height == 8);
  CHECK(std::isfinite(r.image_score));
}
