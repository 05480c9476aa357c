// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divad/backend.hpp"
#include "divad/ddim.hpp"
#include "divad/tensor.hpp"

namespace divad {

/// Per-cell cosine dissimilarity 1 - cos(F, F_rec) in [0, 2]. Cells where
/// either vector has zero norm score 0.
Map dissimilarity_map(const PatchFeatures& features, const PatchFeatures& reconstructed);

/// Bilinear resize with half-pixel centres (align_corners = false).
Map upsample_bilinear(const Map& grid, int out_h, int out_w);

Map apply_mask(const Map& map, const ObjectMask& mask);

/// Separable Gaussian blur with reflected borders; sigma <= 0 returns the input.
Map gaussian_smooth(const Map& map, double sigma);

enum class ScoreReduction { max, top_k_mean };

struct ScoreConfig {
  ScoreReduction reduction = ScoreReduction::max;
  double top_k_fraction = 0.01;
};

std::string to_string(ScoreReduction r);
ScoreReduction score_reduction_from_string(const std::string& name);

/// Image-level score of a map: its maximum, or the mean of the
/// ceil(top_k_fraction * n) largest entries.
double image_score(const Map& map, const ScoreConfig& config = {});

enum class PromptMode { template_text, empty };
std::string to_string(PromptMode m);
PromptMode prompt_mode_from_string(const std::string& name);

/// `partial` inverts t_prime steps and denoises them back; `full` inverts the
/// whole plan and denoises from the end of it.
enum class InvertExtent { partial, full };
std::string to_string(InvertExtent e);
InvertExtent invert_extent_from_string(const std::string& name);

struct ClassConfig;

struct ScoringConfig {
  int t_prime = 10;
  double guidance_invert = 3.5;
  double guidance_sample = 3.5;
  PromptMode prompt_mode = PromptMode::template_text;
  std::string prompt_template = kDefaultPromptTemplate;
  InvertExtent invert_extent = InvertExtent::partial;
  ScoreConfig score;
  double smoothing_sigma = 0.0;
  bool keep_intermediates = false;
};

/// Backends used by score_image. `segmenter` may be null (no object masks).
struct ScoringBackends {
  const Autoencoder* autoencoder = nullptr;
  const DenoiserBackend* denoiser = nullptr;
  const FeatureExtractor* features = nullptr;
  const ObjectSegmenter* segmenter = nullptr;
};

struct AnomalyResult {
  Map map;          // upsampled dissimilarity, before masking
  Map masked_map;   // map * object mask (equals map when no mask is applied)
  double image_score = 0.0;
  std::string class_name;
  std::string sample_id;
  int t_prime = 0;
  PromptMode prompt_mode = PromptMode::template_text;
  bool mask_applied = false;
  std::vector<std::string> warnings;

  // Filled when ScoringConfig::keep_intermediates is set.
  std::optional<Image> reconstruction;
  std::optional<Map> patch_map;
  std::optional<ObjectMask> object_mask;

  nlohmann::json summary_json() const;
};

/// Full scoring pipeline for one image: encode, invert, reconstruct, decode,
/// extract features of both images, compare, upsample to the image size,
/// optionally mask, reduce to a score. Failures are rethrown as StageError
/// naming the stage; a failing segmenter falls back to an all-ones mask and
/// records a warning.
AnomalyResult score_image(const Image& image, const ClassConfig& class_config,
                          const ScoringBackends& backends, const NoiseSchedule& schedule,
                          const TimestepPlan& plan, const ScoringConfig& config);

}  // namespace divad
