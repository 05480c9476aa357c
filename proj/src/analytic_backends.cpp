// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/analytic_backends.hpp"

#include <cmath>

#include "divad/errors.hpp"

namespace divad {

namespace {

void check_latent(const Tensor& latent, const GaussianWorldModel& world) {
  if (!latent.same_shape(world.mean)) {
    throw ContractError("analytic denoiser: latent shape " + shape_string(latent.shape()) +
                        " does not match world shape " + shape_string(world.mean.shape()));
  }
}

DenoiserInfo world_info(const GaussianWorldModel& world, const NoiseSchedule& schedule) {
  DenoiserInfo info;
  info.num_base_steps = schedule.num_base_steps();
  if (world.mean.rank() == 3) {
    info.latent_channels = static_cast<int>(world.mean.dim(0));
    info.latent_side = static_cast<int>(world.mean.dim(1));
  }
  return info;
}

}  // namespace

GaussianWorldModel::GaussianWorldModel(Tensor mean_, Tensor std_)
    : mean(std::move(mean_)), std(std::move(std_)) {
  if (!mean.same_shape(std)) throw ContractError("GaussianWorldModel: mean/std shape mismatch");
  for (double s : std.values()) {
    if (!(s > 0.0)) throw ContractError("GaussianWorldModel: std must be > 0 everywhere");
  }
}

GaussianWorldModel GaussianWorldModel::uniform(const std::vector<std::size_t>& shape, float mean,
                                               float std) {
  return GaussianWorldModel(Tensor(shape, mean), Tensor(shape, std));
}

Tensor analytic_gaussian_eps(const Tensor& z_t, Timestep t, const GaussianWorldModel& model,
                             const NoiseSchedule& schedule) {
  if (t.is_clean()) {
    throw ContractError("analytic_gaussian_eps: alpha_bar = 1 at the clean level leaves no noise");
  }
  check_latent(z_t, model);
  const double ab = schedule.alpha_bar(t);
  const double sab = std::sqrt(ab);
  const double noise_sd = std::sqrt(1.0 - ab);

  Tensor eps(z_t.shape());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double mu = model.mean[i];
    const double var = model.std[i] * model.std[i];
    const double z = z_t[i];
    const double gain = sab * var / (ab * var + 1.0 - ab);
    const double x0 = mu + gain * (z - sab * mu);
    eps[i] = (z - sab * x0) / noise_sd;
  }
  return eps;
}

Tensor constant_eps(const Tensor& z_t, int /*base_t*/, float value) {
  return Tensor(z_t.shape(), value);
}

GaussianDenoiser::GaussianDenoiser(GaussianWorldModel world, NoiseSchedule schedule)
    : world_(std::move(world)), schedule_(std::move(schedule)) {}

DenoiserInfo GaussianDenoiser::info() const { return world_info(world_, schedule_); }

Tensor GaussianDenoiser::predict_eps(const Tensor& latent, int base_t,
                                     const std::optional<std::string>& /*prompt*/) const {
  return analytic_gaussian_eps(latent, Timestep::at(base_t), world_, schedule_);
}

GuidedGaussianDenoiser::GuidedGaussianDenoiser(GaussianWorldModel conditional,
                                               GaussianWorldModel unconditional,
                                               NoiseSchedule schedule)
    : conditional_(std::move(conditional)),
      unconditional_(std::move(unconditional)),
      schedule_(std::move(schedule)) {
  if (!conditional_.mean.same_shape(unconditional_.mean)) {
    throw ContractError("GuidedGaussianDenoiser: world shapes differ");
  }
}

DenoiserInfo GuidedGaussianDenoiser::info() const { return world_info(conditional_, schedule_); }

Tensor GuidedGaussianDenoiser::predict_eps(const Tensor& latent, int base_t,
                                           const std::optional<std::string>& prompt) const {
  return analytic_gaussian_eps(latent, Timestep::at(base_t), prompt ? conditional_ : unconditional_,
                               schedule_);
}

Tensor ConstantDenoiser::predict_eps(const Tensor& latent, int base_t,
                                     const std::optional<std::string>& /*prompt*/) const {
  return constant_eps(latent, base_t, value_);
}

Tensor IdentityAutoencoder::encode(const Image& image) const {
  const auto c = static_cast<std::size_t>(image.channels);
  const auto h = static_cast<std::size_t>(image.height);
  const auto w = static_cast<std::size_t>(image.width);
  Tensor out({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out[(k * h + y) * w + x] = image.pixels[(y * w + x) * c + k];
  return out;
}

Image IdentityAutoencoder::decode(const Tensor& latent) const {
  if (latent.rank() != 3) throw ContractError("IdentityAutoencoder: latent must be (C, H, W)");
  const std::size_t c = latent.dim(0), h = latent.dim(1), w = latent.dim(2);
  Image out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.pixels[(y * w + x) * c + k] = static_cast<float>(latent[(k * h + y) * w + x]);
  return out;
}

PatchFeatures identity_features(const Image& image) {
  const auto h = static_cast<std::size_t>(image.height), w = static_cast<std::size_t>(image.width);
  const auto c = static_cast<std::size_t>(image.channels);
  return PatchFeatures{Tensor({h, w, c}, std::vector<double>(image.pixels.begin(), image.pixels.end())), 1};
}

PatchFeatures mean_pool_features(const Image& image, int patch_size) {
  if (patch_size < 1) throw ContractError("mean_pool_features: patch_size must be >= 1");
  if (image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw ContractError("mean_pool_features: image " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " is not divisible by patch size " +
                        std::to_string(patch_size));
  }
  const int gh = image.height / patch_size, gw = image.width / patch_size, c = image.channels;
  Tensor grid({static_cast<std::size_t>(gh), static_cast<std::size_t>(gw), static_cast<std::size_t>(c)});
  const double inv = 1.0 / (static_cast<double>(patch_size) * patch_size);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int dy = 0; dy < patch_size; ++dy)
          for (int dx = 0; dx < patch_size; ++dx)
            acc += image.at(gy * patch_size + dy, gx * patch_size + dx, k);
        grid[(static_cast<std::size_t>(gy) * gw + gx) * c + k] = acc * inv;
      }
    }
  }
  return PatchFeatures{std::move(grid), patch_size};
}

ObjectMask FixedMaskSegmenter::segment(const Image& image) const {
  if (image.height != mask_.height || image.width != mask_.width) {
    throw ContractError("FixedMaskSegmenter: mask is " + std::to_string(mask_.height) + "x" +
                        std::to_string(mask_.width) + ", image is " + std::to_string(image.height) +
                        "x" + std::to_string(image.width));
  }
  return mask_;
}

}  // namespace divad
