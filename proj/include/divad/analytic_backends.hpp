// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Closed-form and toy backends used for desk-scale verification.

#include <memory>

#include "divad/backend.hpp"
#include "divad/schedule.hpp"

namespace divad {

/// Elementwise Gaussian law of clean latents: z0[i] ~ N(mean[i], std[i]^2).
struct GaussianWorldModel {
  Tensor mean;
  Tensor std;

  /// Throws ContractError unless shapes agree and every std is > 0.
  GaussianWorldModel(Tensor mean, Tensor std);
  static GaussianWorldModel uniform(const std::vector<std::size_t>& shape, float mean, float std);
};

/// Optimal eps predictor for a Gaussian data law:
///   E[z0 | z_t] = mu + sqrt(ab) s^2 / (ab s^2 + 1 - ab) * (z_t - sqrt(ab) mu)
///   eps = (z_t - sqrt(ab) E[z0 | z_t]) / sqrt(1 - ab)
/// The clean level has no noise to predict and raises ContractError.
Tensor analytic_gaussian_eps(const Tensor& z_t, Timestep t, const GaussianWorldModel& model,
                             const NoiseSchedule& schedule);

Tensor constant_eps(const Tensor& z_t, int base_t, float value);

/// Analytic denoiser for one world; the prompt is ignored.
class GaussianDenoiser final : public DenoiserBackend {
 public:
  GaussianDenoiser(GaussianWorldModel world, NoiseSchedule schedule);
  DenoiserInfo info() const override;
  Tensor predict_eps(const Tensor& latent, int base_t,
                     const std::optional<std::string>& prompt) const override;
  const GaussianWorldModel& world() const noexcept { return world_; }

 private:
  GaussianWorldModel world_;
  NoiseSchedule schedule_;
};

/// Analytic denoiser with a class-specific conditional world and a broader
/// unconditional world, so guidance and the empty-prompt mode have an effect.
class GuidedGaussianDenoiser final : public DenoiserBackend {
 public:
  GuidedGaussianDenoiser(GaussianWorldModel conditional, GaussianWorldModel unconditional,
                         NoiseSchedule schedule);
  DenoiserInfo info() const override;
  Tensor predict_eps(const Tensor& latent, int base_t,
                     const std::optional<std::string>& prompt) const override;

 private:
  GaussianWorldModel conditional_;
  GaussianWorldModel unconditional_;
  NoiseSchedule schedule_;
};

class ConstantDenoiser final : public DenoiserBackend {
 public:
  explicit ConstantDenoiser(float value, int num_base_steps = 1000)
      : value_(value), num_base_steps_(num_base_steps) {}
  DenoiserInfo info() const override { return {0, 0, num_base_steps_}; }
  Tensor predict_eps(const Tensor& latent, int base_t,
                     const std::optional<std::string>& prompt) const override;

 private:
  float value_;
  int num_base_steps_;
};

/// Pixel-space "autoencoder": the latent is the image in (C, H, W) layout.
class IdentityAutoencoder final : public Autoencoder {
 public:
  Tensor encode(const Image& image) const override;
  Image decode(const Tensor& latent) const override;
};

/// Each pixel is its own patch; the feature is the channel vector.
PatchFeatures identity_features(const Image& image);
/// Per-patch channel means over non-overlapping patch_size squares.
PatchFeatures mean_pool_features(const Image& image, int patch_size);

class IdentityFeatures final : public FeatureExtractor {
 public:
  PatchFeatures extract(const Image& image) const override { return identity_features(image); }
};

class MeanPoolFeatures final : public FeatureExtractor {
 public:
  explicit MeanPoolFeatures(int patch_size) : patch_size_(patch_size) {}
  PatchFeatures extract(const Image& image) const override {
    return mean_pool_features(image, patch_size_);
  }

 private:
  int patch_size_;
};

/// Returns the same mask for every image (e.g. a known object footprint).
class FixedMaskSegmenter final : public ObjectSegmenter {
 public:
  explicit FixedMaskSegmenter(ObjectMask mask) : mask_(std::move(mask)) {}
  ObjectMask segment(const Image& image) const override;

 private:
  ObjectMask mask_;
};

}  // namespace divad
