// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "divad/backend.hpp"
#include "divad/schedule.hpp"
#include "divad/tensor.hpp"

namespace divad {

/// A (C, H, W) latent tagged with its current noise level.
struct LatentTensor {
  Tensor data;
  Timestep level = Timestep::clean();
};

/// Text condition and guidance weight for one direction of the loop.
/// An absent `text` makes every noise estimate unconditional.
struct PromptCondition {
  std::optional<std::string> text;
  double guidance = 3.5;
};

/// Default prompt template; `{obj}` is replaced by the class word.
inline constexpr const char* kDefaultPromptTemplate = "an image of a {obj}";
std::string render_prompt(const std::string& templ, const std::string& object_word);

/// w * eps_cond + (1 - w) * eps_uncond, elementwise. w == 1 and w == 0 return
/// the respective operand bit for bit.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

/// Deterministic DDIM update from level `t` to the less noisy `t_prev`,
/// written through the predicted clean latent. Stepping to the clean level
/// returns that prediction.
LatentTensor sample_step(const LatentTensor& z_t, const Tensor& eps, Timestep t, Timestep t_prev,
                         const NoiseSchedule& schedule);

/// Inverse of sample_step for a fixed eps: from `t_prev` up to the noisier `t`.
LatentTensor invert_step(const LatentTensor& z_prev, const Tensor& eps, Timestep t_prev, Timestep t,
                         const NoiseSchedule& schedule);

using SampleStepFn = LatentTensor (*)(const LatentTensor&, const Tensor&, Timestep, Timestep,
                                      const NoiseSchedule&);
using InvertStepFn = LatentTensor (*)(const LatentTensor&, const Tensor&, Timestep, Timestep,
                                      const NoiseSchedule&);

/// Step functions used by the loops. Replaced only by the self-test's
/// mutation mode.
struct StepKernels {
  SampleStepFn sample = &sample_step;
  InvertStepFn invert = &invert_step;
};

/// Guided noise estimate at (latent, base_t): one backend call when the
/// prompt is absent, otherwise cfg_combine of the conditional and
/// unconditional calls.
Tensor guided_eps(const DenoiserBackend& backend, const Tensor& latent, int base_t,
                  const PromptCondition& prompt);

/// Runs inversion steps for plan positions 0 .. t_prime-1 starting from a
/// clean latent and returns the latent at position t_prime.
///
/// Each step evaluates the noise estimate at the latent being left. The clean
/// level has no backend timestep, so the first step evaluates at the plan's
/// first base index.
LatentTensor invert(const LatentTensor& z, const DenoiserBackend& backend,
                    const PromptCondition& prompt, const NoiseSchedule& schedule,
                    const TimestepPlan& plan, int t_prime, const StepKernels& kernels = {});

/// Runs sampling steps for plan positions t_prime-1 .. 0 and returns the
/// clean reconstruction.
LatentTensor reconstruct(const LatentTensor& z_tprime, const DenoiserBackend& backend,
                         const PromptCondition& prompt, const NoiseSchedule& schedule,
                         const TimestepPlan& plan, int t_prime, const StepKernels& kernels = {});

}  // namespace divad
