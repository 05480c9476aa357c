// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "divad/tensor.hpp"

namespace divad {

struct DenoiserInfo {
  int latent_channels = 0;
  int latent_side = 0;
  int num_base_steps = 0;
};

/// Noise predictor eps(z_t, t, prompt). An absent prompt is the
/// unconditional call. Implementations must be deterministic for fixed
/// inputs and safe to call from several threads at once.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;
  virtual DenoiserInfo info() const = 0;
  virtual Tensor predict_eps(const Tensor& latent, int base_t,
                             const std::optional<std::string>& prompt) const = 0;
};

/// Maps images to (C, H, W) latents and back.
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual Tensor encode(const Image& image) const = 0;
  virtual Image decode(const Tensor& latent) const = 0;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual PatchFeatures extract(const Image& image) const = 0;
};

class ObjectSegmenter {
 public:
  virtual ~ObjectSegmenter() = default;
  virtual ObjectMask segment(const Image& image) const = 0;
};

}  // namespace divad
