// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divad/anomaly_map.hpp"
#include "divad/dataset.hpp"
#include "divad/schedule.hpp"

namespace divad {

enum class BackendKind { analytic, constant, remote };
enum class FeatureKind { identity, mean_pool, remote };
enum class SegmenterKind { none, remote, footprint };

std::string to_string(BackendKind k);
std::string to_string(FeatureKind k);
std::string to_string(SegmenterKind k);

struct ClassOverride {
  std::optional<bool> apply_object_mask;
  std::optional<std::string> prompt_object_word;
};

struct RunConfig {
  ScheduleConfig schedule;
  int plan_steps = 50;
  ScoringConfig scoring;

  BackendKind backend = BackendKind::analytic;
  std::string server_url;
  int pool_size = 4;
  double timeout_seconds = 300.0;
  float constant_eps = 0.0f;
  float world_mean = 0.0f;  // analytic backend world for non-synthetic inputs
  float world_std = 1.0f;
  std::string world_file;   // synthetic world blob; replaces the uniform world when set

  FeatureKind features = FeatureKind::identity;
  int patch_size = 8;
  SegmenterKind segmenter = SegmenterKind::none;
  double segmenter_threshold = 0.1;

  int image_side = 256;
  std::filesystem::path output_dir = "divad_out";
  int workers = 0;  // 0 = hardware concurrency
  std::uint64_t seed = 0;
  bool save_tensors = false;

  // synth-bench corpus
  int synth_images = 100;
  int synth_side = 64;
  AnomalySpec synth_anomaly;
  SyntheticWorldSpec synth_world;
  bool synth_write_heatmaps = true;

  std::map<std::string, ClassOverride> class_overrides;

  /// Flat dotted-key view, e.g. {"ddim.t_prime": 10, ...}.
  nlohmann::json to_json() const;
  /// Applies every key present in `flat`; unknown keys and bad values raise ConfigError.
  void apply_json(const nlohmann::json& flat);
  /// Applies one textual value, as given on the command line.
  void apply_text(const std::string& key, const std::string& value);
  /// Cross-field checks (T' <= T, w >= 0, remote kinds need a URL, ...).
  void validate() const;

  ClassConfig class_config(const std::string& class_name) const;
  int worker_count() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every flat key accepted by RunConfig, in a stable order.
const std::vector<ConfigKey>& config_keys();

/// defaults < file < DIVAD_SERVER_URL < explicit overrides (applied in order).
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace divad
