// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/anomaly_map.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>

#include "divad/dataset.hpp"
#include "divad/errors.hpp"
#include "divad/image_io.hpp"

namespace divad {

// Rounding floor of the cosine in double; anything below is an exact match.
constexpr double kCosineFloor = 64.0 * std::numeric_limits<double>::epsilon();

Map dissimilarity_map(const PatchFeatures& features, const PatchFeatures& reconstructed) {
  if (features.grid.rank() != 3 || !features.grid.same_shape(reconstructed.grid)) {
    throw ContractError("dissimilarity_map: feature grids " + shape_string(features.grid.shape()) +
                        " and " + shape_string(reconstructed.grid.shape()) + " are not congruent");
  }
  const int gh = features.grid_h(), gw = features.grid_w();
  const auto dim = static_cast<std::size_t>(features.feature_dim());
  Map out(gh, gw);
  const double* a = features.grid.data();
  const double* b = reconstructed.grid.data();
  for (std::size_t cell = 0; cell < static_cast<std::size_t>(gh) * gw; ++cell) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double x = a[cell * dim + d], y = b[cell * dim + d];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    double v = 0.0;
    if (na > 0.0 && nb > 0.0) v = std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
    if (v <= kCosineFloor) v = 0.0;
    out.values[cell] = static_cast<float>(v);
  }
  return out;
}

Map upsample_bilinear(const Map& grid, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractError("upsample_bilinear: output dims must be positive");
  if (grid.height <= 0 || grid.width <= 0) throw ContractError("upsample_bilinear: empty input grid");
  if (out_h < grid.height || out_w < grid.width) {
    throw ContractError("upsample_bilinear: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                        " is smaller than the grid " + std::to_string(grid.height) + "x" +
                        std::to_string(grid.width));
  }
  Map out(out_h, out_w);
  const double sy = static_cast<double>(grid.height) / out_h;
  const double sx = static_cast<double>(grid.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, grid.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, grid.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, grid.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, grid.width - 1);
      const double wx = fx - x0;
      const double top = grid.at(y0, x0) + wx * (grid.at(y0, x1) - grid.at(y0, x0));
      const double bot = grid.at(y1, x0) + wx * (grid.at(y1, x1) - grid.at(y1, x0));
      out.at(y, x) = static_cast<float>(top + wy * (bot - top));
    }
  }
  return out;
}

Map apply_mask(const Map& map, const ObjectMask& mask) {
  if (map.height != mask.height || map.width != mask.width) {
    throw ContractError("apply_mask: map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                        " vs mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  Map out = map;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= static_cast<float>(mask.pixels[i]);
  return out;
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace

Map gaussian_smooth(const Map& map, double sigma) {
  if (!(sigma > 0.0) || map.size() == 0) return map;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= total;

  Map tmp(map.height, map.width), out(map.height, map.width);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * map.at(y, reflect(x + i, map.width));
      tmp.at(y, x) = static_cast<float>(acc);
    }
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(reflect(y + i, map.height), x);
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

std::string to_string(ScoreReduction r) { return r == ScoreReduction::max ? "max" : "top_k_mean"; }

ScoreReduction score_reduction_from_string(const std::string& name) {
  if (name == "max") return ScoreReduction::max;
  if (name == "top_k_mean") return ScoreReduction::top_k_mean;
  throw ConfigError("score.reduction", "expected 'max' or 'top_k_mean', got '" + name + "'");
}

double image_score(const Map& map, const ScoreConfig& config) {
  if (map.size() == 0) throw ContractError("image_score: empty map");
  if (config.reduction == ScoreReduction::max) return map.max_value();
  if (!(config.top_k_fraction > 0.0 && config.top_k_fraction <= 1.0)) {
    throw ConfigError("score.top_k_fraction", "must lie in (0, 1]");
  }
  const auto n = map.size();
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.top_k_fraction * static_cast<double>(n) - 1e-9)), 1, n);
  std::vector<float> v = map.values;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += v[i];
  return sum / static_cast<double>(k);
}

std::string to_string(PromptMode m) { return m == PromptMode::template_text ? "template" : "empty"; }

PromptMode prompt_mode_from_string(const std::string& name) {
  if (name == "template") return PromptMode::template_text;
  if (name == "empty") return PromptMode::empty;
  throw ConfigError("prompt.mode", "expected 'template' or 'empty', got '" + name + "'");
}

std::string to_string(InvertExtent e) { return e == InvertExtent::partial ? "partial" : "full"; }

InvertExtent invert_extent_from_string(const std::string& name) {
  if (name == "partial") return InvertExtent::partial;
  if (name == "full") return InvertExtent::full;
  throw ConfigError("ddim.invert_extent", "expected 'partial' or 'full', got '" + name + "'");
}

nlohmann::json AnomalyResult::summary_json() const {
  return {{"sample_id", sample_id},
          {"class_name", class_name},
          {"image_score", image_score},
          {"map_max", masked_map.size() ? masked_map.max_value() : 0.0f},
          {"t_prime", t_prime},
          {"prompt_mode", to_string(prompt_mode)},
          {"mask_applied", mask_applied},
          {"warnings", warnings}};
}

namespace {

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    std::throw_with_nested(StageError(name, e.what()));
  }
}

}  // namespace

AnomalyResult score_image(const Image& image, const ClassConfig& class_config,
                          const ScoringBackends& backends, const NoiseSchedule& schedule,
                          const TimestepPlan& plan, const ScoringConfig& config) {
  if (!backends.autoencoder || !backends.denoiser || !backends.features) {
    throw ContractError("score_image: autoencoder, denoiser and feature backends are required");
  }
  if (image.empty()) throw ContractError("score_image: empty image");
  const int steps = config.invert_extent == InvertExtent::full ? plan.num_plan_steps() : config.t_prime;
  if (steps < 1 || steps > plan.num_plan_steps()) {
    throw ConfigError("ddim.t_prime", "must lie in [1, " + std::to_string(plan.num_plan_steps()) + "], got " +
                                          std::to_string(steps));
  }

  std::optional<std::string> text;
  if (config.prompt_mode == PromptMode::template_text) {
    text = render_prompt(config.prompt_template, class_config.prompt_object_word);
  }
  const PromptCondition invert_prompt{text, config.guidance_invert};
  const PromptCondition sample_prompt{text, config.guidance_sample};

  AnomalyResult result;
  result.class_name = class_config.class_name;
  result.t_prime = steps;
  result.prompt_mode = config.prompt_mode;

  const Tensor z0 = stage("encode", [&] { return backends.autoencoder->encode(image); });
  const LatentTensor zt = stage("invert", [&] {
    return invert(LatentTensor{z0, Timestep::clean()}, *backends.denoiser, invert_prompt, schedule, plan, steps);
  });
  const LatentTensor zr = stage("reconstruct", [&] {
    return reconstruct(zt, *backends.denoiser, sample_prompt, schedule, plan, steps);
  });
  Image recon = stage("decode", [&] { return backends.autoencoder->decode(zr.data); });
  if (recon.height != image.height || recon.width != image.width) {
    recon = stage("decode", [&] { return resize_bilinear(recon, image.height, image.width); });
  }
  const PatchFeatures f_in = stage("features", [&] { return backends.features->extract(image); });
  const PatchFeatures f_rec = stage("features", [&] { return backends.features->extract(recon); });

  Map grid = stage("dissimilarity", [&] { return dissimilarity_map(f_in, f_rec); });
  result.map = stage("upsample", [&] {
    return gaussian_smooth(upsample_bilinear(grid, image.height, image.width), config.smoothing_sigma);
  });

  std::optional<ObjectMask> mask;
  if (class_config.apply_object_mask && backends.segmenter) {
    try {
      mask = backends.segmenter->segment(image);
      if (mask->height != image.height || mask->width != image.width) {
        mask = resize_nearest(*mask, image.height, image.width);
      }
    } catch (const std::exception& e) {
      result.warnings.push_back(std::string("segmenter failed, using all-ones mask: ") + e.what());
      mask = ObjectMask(image.height, image.width, 1);
    }
  }
  if (mask) {
    result.masked_map = apply_mask(result.map, *mask);
    result.mask_applied = true;
  } else {
    result.masked_map = result.map;
  }
  result.image_score = image_score(result.masked_map, config.score);

  if (config.keep_intermediates) {
    result.reconstruction = std::move(recon);
    result.patch_map = std::move(grid);
    result.object_mask = std::move(mask);
  }
  return result;
}

}  // namespace divad
