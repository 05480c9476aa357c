// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "divad/config.hpp"
#include "divad/errors.hpp"
#include "divad/remote.hpp"

using namespace divad;
namespace fs = std::filesystem;

namespace {

struct EnvGuard {
  explicit EnvGuard(const char* value) {
    if (value) ::setenv(kServerUrlEnv, value, 1);
    else ::unsetenv(kServerUrlEnv);
  }
  ~EnvGuard() { ::unsetenv(kServerUrlEnv); }
};

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.plan_steps == 50);
  CHECK(c.scoring.t_prime == 10);
  CHECK(c.scoring.guidance_invert == doctest::Approx(3.5));
  CHECK(c.image_side == 256);
  CHECK(c.segmenter_threshold == doctest::Approx(0.1));
  CHECK(c.schedule.num_base_steps == 1000);
  CHECK_NOTHROW(c.validate());
  const auto j = c.to_json();
  for (const auto& k : config_keys()) CHECK_MESSAGE(j.contains(k.name), k.name);
  CHECK(j.size() == config_keys().size());
}

TEST_CASE("apply_json roundtrip and unknown keys") {
  RunConfig a;
  a.apply_text("ddim.t_prime", "5");
  a.apply_text("guidance.sample", "2.25");
  a.apply_text("prompt.mode", "empty");
  a.apply_text("synth.object_footprint", "true");
  a.apply_text("run.output_dir", "elsewhere");
  CHECK(a.scoring.t_prime == 5);
  CHECK(a.scoring.guidance_sample == doctest::Approx(2.25));
  CHECK(a.synth_world.object_footprint);
  RunConfig b;
  b.apply_json(a.to_json());
  CHECK(b.to_json() == a.to_json());

  RunConfig c;
  CHECK_THROWS_AS(c.apply_text("ddim.tprime", "5"), ConfigError);
  CHECK_THROWS_AS(c.apply_text("ddim.t_prime", "five"), ConfigError);
  CHECK_THROWS_AS(c.apply_text("prompt.mode", "loud"), ConfigError);
  CHECK_THROWS_AS(c.apply_text("synth.object_footprint", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.apply_json(nlohmann::json{{"nope", 1}}), ConfigError);
}

TEST_CASE("validation") {
  RunConfig c;
  c.scoring.t_prime = 51;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.scoring.guidance_invert = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.backend = BackendKind::remote;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.server_url = "http://127.0.0.1:1";
  CHECK_NOTHROW(c.validate());
  c = RunConfig{};
  c.schedule.beta_start = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("precedence: defaults < file < environment < overrides") {
  const fs::path file = write_file("divad_cfg_test.json",
                                   R"({"ddim.t_prime": 7, "backend.url": "http://file:1", "io.image_side": 128})");
  {
    EnvGuard env(nullptr);
    const RunConfig c = load_run_config(file, {});
    CHECK(c.scoring.t_prime == 7);
    CHECK(c.server_url == "http://file:1");
    CHECK(c.image_side == 128);
  }
  {
    EnvGuard env("http://env:2");
    CHECK(load_run_config(file, {}).server_url == "http://env:2");
    CHECK(load_run_config(std::nullopt, {}).server_url == "http://env:2");
    const RunConfig c = load_run_config(file, {{"backend.url", "http://flag:3"}, {"ddim.t_prime", "3"}});
    CHECK(c.server_url == "http://flag:3");
    CHECK(c.scoring.t_prime == 3);
    CHECK(c.image_side == 128);
  }
  {
    EnvGuard env(nullptr);
    CHECK(load_run_config(file, {{"ddim.t_prime", "4"}, {"ddim.t_prime", "9"}}).scoring.t_prime == 9);
  }
  fs::remove(file);

  const fs::path bad = write_file("divad_cfg_bad.json", R"({"ddim.t_prime": )");
  CHECK_THROWS_AS(load_run_config(bad, {}), ConfigError);
  fs::remove(bad);
  const fs::path unknown = write_file("divad_cfg_unknown.json", R"({"ddim.steps": 3})");
  CHECK_THROWS_WITH_AS(load_run_config(unknown, {}), doctest::Contains("ddim.steps"), ConfigError);
  fs::remove(unknown);
  CHECK_THROWS_AS(load_run_config(fs::path("/nonexistent/divad.json"), {}), ConfigError);
}

TEST_CASE("class overrides") {
  RunConfig c;
  c.apply_text("class.carpet.apply_object_mask", "true");
  c.apply_text("class.pcb1.prompt_object_word", "circuit board");
  CHECK(c.class_config("carpet").apply_object_mask);
  CHECK(c.class_config("pcb1").prompt_object_word == "circuit board");
  CHECK(c.class_config("bottle").apply_object_mask);
  CHECK_FALSE(c.class_config("grid").apply_object_mask);
  CHECK_THROWS_AS(c.apply_text("class.carpet.colour", "red"), ConfigError);
  RunConfig d;
  d.apply_json(c.to_json());
  CHECK(d.class_config("pcb1").prompt_object_word == "circuit board");
}

TEST_CASE("worker count") {
  RunConfig c;
  CHECK(c.worker_count() >= 1);
  c.workers = 3;
  CHECK(c.worker_count() == 3);
}
