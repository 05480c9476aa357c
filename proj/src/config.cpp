// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

#include "divad/errors.hpp"
#include "divad/remote.hpp"

namespace divad {

using nlohmann::json;

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::analytic: return "analytic";
    case BackendKind::constant: return "constant";
    case BackendKind::remote: return "remote";
  }
  return "?";
}

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::identity: return "identity";
    case FeatureKind::mean_pool: return "mean_pool";
    case FeatureKind::remote: return "remote";
  }
  return "?";
}

std::string to_string(SegmenterKind k) {
  switch (k) {
    case SegmenterKind::none: return "none";
    case SegmenterKind::remote: return "remote";
    case SegmenterKind::footprint: return "footprint";
  }
  return "?";
}

namespace {

std::string to_string(AnomalyShape s) { return s == AnomalyShape::square ? "square" : "blob"; }

template <typename E>
E parse_enum(const std::string& key, const std::string& value, std::initializer_list<E> options) {
  std::string expected;
  for (E e : options) {
    if (to_string(e) == value) return e;
    expected += (expected.empty() ? "" : ", ") + to_string(e);
  }
  throw ConfigError(key, "expected one of {" + expected + "}, got '" + value + "'");
}

struct Field {
  ConfigKey key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const std::string& key, const json& v) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
    } else {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

template <typename T>
json to_value(const T& v) {
  return json(v);
}

// Shortest decimal that reads back as the same float, so 0.3f prints as 0.3.
json to_value(float v) {
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return std::strtod(std::string(buf, end).c_str(), nullptr);
}

#define DIVAD_FIELD(NAME, HELP, TYPE, MEMBER)                                              \
  Field {                                                                                 \
    {NAME, HELP}, [](const RunConfig& c) { return to_value(c.MEMBER); },                  \
        [](RunConfig& c, const json& v) { c.MEMBER = as<TYPE>(NAME, v); }                 \
  }

#define DIVAD_ENUM_FIELD(NAME, HELP, MEMBER, ...)                                          \
  Field {                                                                                 \
    {NAME, HELP}, [](const RunConfig& c) { return json(to_string(c.MEMBER)); },           \
        [](RunConfig& c, const json& v) {                                                 \
          c.MEMBER = parse_enum(NAME, as<std::string>(NAME, v), {__VA_ARGS__});            \
        }                                                                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DIVAD_FIELD("schedule.num_base_steps", "base diffusion steps", int, schedule.num_base_steps),
      DIVAD_FIELD("schedule.beta_start", "first beta", double, schedule.beta_start),
      DIVAD_FIELD("schedule.beta_end", "last beta", double, schedule.beta_end),
      DIVAD_ENUM_FIELD("schedule.spacing", "beta spacing (linear|scaled_linear)", schedule.spacing,
                       BetaSpacing::linear, BetaSpacing::scaled_linear),
      DIVAD_FIELD("ddim.plan_steps", "DDIM plan length T", int, plan_steps),
      DIVAD_FIELD("ddim.t_prime", "inversion depth T'", int, scoring.t_prime),
      DIVAD_ENUM_FIELD("ddim.invert_extent", "partial: T' steps; full: whole plan", scoring.invert_extent,
                       InvertExtent::partial, InvertExtent::full),
      DIVAD_FIELD("guidance.invert", "guidance weight during inversion", double, scoring.guidance_invert),
      DIVAD_FIELD("guidance.sample", "guidance weight during denoising", double, scoring.guidance_sample),
      DIVAD_ENUM_FIELD("prompt.mode", "template|empty", scoring.prompt_mode, PromptMode::template_text,
                       PromptMode::empty),
      DIVAD_FIELD("prompt.template", "prompt template, {obj} is the class word", std::string,
                  scoring.prompt_template),
      DIVAD_ENUM_FIELD("score.reduction", "map to image score (max|top_k_mean)", scoring.score.reduction,
                       ScoreReduction::max, ScoreReduction::top_k_mean),
      DIVAD_FIELD("score.top_k_fraction", "fraction averaged by top_k_mean", double,
                  scoring.score.top_k_fraction),
      DIVAD_FIELD("map.smoothing_sigma", "Gaussian smoothing of the map, 0 = off", double,
                  scoring.smoothing_sigma),
      DIVAD_ENUM_FIELD("backend.kind", "denoiser (analytic|constant|remote)", backend, BackendKind::analytic,
                       BackendKind::constant, BackendKind::remote),
      DIVAD_FIELD("backend.url", "model server URL", std::string, server_url),
      DIVAD_FIELD("backend.pool_size", "concurrent server connections", int, pool_size),
      DIVAD_FIELD("backend.timeout", "request timeout, seconds", double, timeout_seconds),
      DIVAD_FIELD("backend.constant_eps", "eps value of the constant backend", float, constant_eps),
      DIVAD_FIELD("backend.world_mean", "analytic world mean", float, world_mean),
      DIVAD_FIELD("backend.world_std", "analytic world std", float, world_std),
      DIVAD_FIELD("backend.world_file", "world file written with an exported synthetic corpus", std::string,
                  world_file),
      DIVAD_ENUM_FIELD("features.kind", "identity|mean_pool|remote", features, FeatureKind::identity,
                       FeatureKind::mean_pool, FeatureKind::remote),
      DIVAD_FIELD("features.patch_size", "mean_pool patch size", int, patch_size),
      DIVAD_ENUM_FIELD("segmenter.kind", "none|remote|footprint", segmenter, SegmenterKind::none,
                       SegmenterKind::remote, SegmenterKind::footprint),
      DIVAD_FIELD("segmenter.threshold", "detection confidence threshold", double, segmenter_threshold),
      DIVAD_FIELD("io.image_side", "square input resolution", int, image_side),
      DIVAD_FIELD("run.output_dir", "output directory", std::string, output_dir),
      DIVAD_FIELD("run.workers", "worker threads, 0 = CPU count", int, workers),
      DIVAD_FIELD("run.seed", "random seed", std::uint64_t, seed),
      DIVAD_FIELD("run.save_tensors", "write raw maps as tensor blobs", bool, save_tensors),
      DIVAD_FIELD("synth.images", "synthetic corpus size", int, synth_images),
      DIVAD_FIELD("synth.side", "synthetic image side", int, synth_side),
      DIVAD_ENUM_FIELD("synth.shape", "square|blob", synth_anomaly.shape, AnomalyShape::square,
                       AnomalyShape::blob),
      DIVAD_FIELD("synth.size", "anomaly size, pixels", int, synth_anomaly.size),
      DIVAD_FIELD("synth.amplitude", "anomaly amplitude", float, synth_anomaly.amplitude),
      DIVAD_FIELD("synth.anomaly_fraction", "fraction of anomalous images", double,
                  synth_anomaly.anomaly_fraction),
      DIVAD_FIELD("synth.clutter_count", "background specks per image", int, synth_anomaly.clutter_count),
      DIVAD_FIELD("synth.clutter_size", "speck size, pixels", int, synth_anomaly.clutter_size),
      DIVAD_FIELD("synth.clutter_amplitude", "speck amplitude", float, synth_anomaly.clutter_amplitude),
      DIVAD_FIELD("synth.noise_std", "texture noise std", float, synth_world.noise_std),
      DIVAD_FIELD("synth.generic_mean", "unconditional world mean", float, synth_world.generic_mean),
      DIVAD_FIELD("synth.generic_std", "unconditional world std", float, synth_world.generic_std),
      DIVAD_FIELD("synth.object_footprint", "textured disk on flat background", bool,
                  synth_world.object_footprint),
      DIVAD_FIELD("synth.write_heatmaps", "write per-sample heatmaps", bool, synth_write_heatmaps),
  };
  return table;
}

#undef DIVAD_FIELD
#undef DIVAD_ENUM_FIELD

constexpr const char* kClassPrefix = "class.";

void apply_class_key(RunConfig& c, const std::string& key, const json& v) {
  const std::string rest = key.substr(std::string(kClassPrefix).size());
  const auto dot = rest.rfind('.');
  if (dot == std::string::npos || dot == 0) {
    throw ConfigError(key, "expected class.<name>.apply_object_mask or class.<name>.prompt_object_word");
  }
  const std::string cls = rest.substr(0, dot), field = rest.substr(dot + 1);
  if (field == "apply_object_mask") {
    c.class_overrides[cls].apply_object_mask = as<bool>(key, v);
  } else if (field == "prompt_object_word") {
    c.class_overrides[cls].prompt_object_word = as<std::string>(key, v);
  } else {
    throw ConfigError(key, "unknown class field '" + field + "'");
  }
}

json parse_text_like(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "on") return true;
      if (text == "false" || text == "0" || text == "off") return false;
      throw ConfigError(key, "expected true/false, got '" + text + "'");
    }
    std::size_t used = 0;
    if (like.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw ConfigError(key, "expected a non-negative integer");
      const auto v = std::stoull(text, &used, 0);
      if (used != text.size()) throw ConfigError(key, "trailing characters in '" + text + "'");
      return v;
    }
    if (like.is_number_integer()) {
      const auto v = std::stoll(text, &used, 10);
      if (used != text.size()) throw ConfigError(key, "trailing characters in '" + text + "'");
      return v;
    }
    if (like.is_number()) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw ConfigError(key, "trailing characters in '" + text + "'");
      return v;
    }
  } catch (const std::logic_error&) {
    throw ConfigError(key, "cannot parse '" + text + "'");
  }
  return text;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& f : fields()) j[f.key.name] = f.get(*this);
  for (const auto& [cls, o] : class_overrides) {
    if (o.apply_object_mask) j[std::string(kClassPrefix) + cls + ".apply_object_mask"] = *o.apply_object_mask;
    if (o.prompt_object_word) j[std::string(kClassPrefix) + cls + ".prompt_object_word"] = *o.prompt_object_word;
  }
  return j;
}

void RunConfig::apply_json(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config", "expected a JSON object of dotted keys");
  for (const auto& [key, value] : flat.items()) {
    if (key.rfind(kClassPrefix, 0) == 0) {
      apply_class_key(*this, key, value);
      continue;
    }
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key.name == key; });
    if (it == table.end()) throw ConfigError(key, "unknown configuration key");
    it->set(*this, value);
  }
}

void RunConfig::apply_text(const std::string& key, const std::string& value) {
  if (key.rfind(kClassPrefix, 0) == 0) {
    const bool is_mask = key.size() > 18 && key.ends_with(".apply_object_mask");
    apply_class_key(*this, key, is_mask ? parse_text_like(key, value, json(true)) : json(value));
    return;
  }
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key.name == key; });
  if (it == table.end()) throw ConfigError(key, "unknown configuration key");
  it->set(*this, parse_text_like(key, value, it->get(*this)));
}

void RunConfig::validate() const {
  (void)build_schedule(schedule);
  if (plan_steps < 1) throw ConfigError("ddim.plan_steps", "must be >= 1");
  if (plan_steps > schedule.num_base_steps) throw ConfigError("ddim.plan_steps", "exceeds schedule.num_base_steps");
  if (scoring.t_prime < 1 || scoring.t_prime > plan_steps) {
    throw ConfigError("ddim.t_prime", "must lie in [1, ddim.plan_steps = " + std::to_string(plan_steps) + "]");
  }
  if (!(scoring.guidance_invert >= 0.0)) throw ConfigError("guidance.invert", "must be >= 0");
  if (!(scoring.guidance_sample >= 0.0)) throw ConfigError("guidance.sample", "must be >= 0");
  if (scoring.prompt_template.empty()) throw ConfigError("prompt.template", "must not be empty");
  if (!(scoring.score.top_k_fraction > 0.0 && scoring.score.top_k_fraction <= 1.0)) {
    throw ConfigError("score.top_k_fraction", "must lie in (0, 1]");
  }
  if (!(scoring.smoothing_sigma >= 0.0)) throw ConfigError("map.smoothing_sigma", "must be >= 0");
  const bool remote = backend == BackendKind::remote || features == FeatureKind::remote ||
                      segmenter == SegmenterKind::remote;
  if (remote && server_url.empty()) {
    throw ConfigError("backend.url", "remote backends need a server URL (flag or " + std::string(kServerUrlEnv) + ")");
  }
  if (pool_size < 1) throw ConfigError("backend.pool_size", "must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("backend.timeout", "must be > 0");
  if (!(world_std > 0.0f)) throw ConfigError("backend.world_std", "must be > 0");
  if (patch_size < 1) throw ConfigError("features.patch_size", "must be >= 1");
  if (!(segmenter_threshold >= 0.0 && segmenter_threshold <= 1.0)) {
    throw ConfigError("segmenter.threshold", "must lie in [0, 1]");
  }
  if (image_side < 8) throw ConfigError("io.image_side", "must be >= 8");
  if (workers < 0) throw ConfigError("run.workers", "must be >= 0");
  if (synth_images < 2) throw ConfigError("synth.images", "must be >= 2");
  if (synth_side < 16) throw ConfigError("synth.side", "must be >= 16");
  if (!(synth_world.noise_std > 0.0f)) throw ConfigError("synth.noise_std", "must be > 0");
  if (!(synth_world.generic_std > 0.0f)) throw ConfigError("synth.generic_std", "must be > 0");
}

ClassConfig RunConfig::class_config(const std::string& class_name) const {
  ClassConfig c = default_class_config(class_name);
  if (const auto it = class_overrides.find(class_name); it != class_overrides.end()) {
    if (it->second.apply_object_mask) c.apply_object_mask = *it->second.apply_object_mask;
    if (it->second.prompt_object_word) c.prompt_object_word = *it->second.prompt_object_word;
  }
  return c;
}

int RunConfig::worker_count() const {
  if (workers > 0) return workers;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig c;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config", "cannot open " + file->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config", file->string() + ": " + e.what());
    }
    c.apply_json(j);
  }
  if (const char* env = std::getenv(kServerUrlEnv); env && *env) c.server_url = env;
  for (const auto& [key, value] : overrides) c.apply_text(key, value);
  c.validate();
  return c;
}

}  // namespace divad
