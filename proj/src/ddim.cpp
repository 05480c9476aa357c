// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/ddim.hpp"

#include <cmath>
#include <exception>

#include "divad/errors.hpp"

namespace divad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                        " vs " + shape_string(b.shape()));
  }
}

int step_tag(Timestep t) { return t.is_clean() ? -1 : t.index(); }

// Shared core of both directions: move `z` from level `from` to level `to`
// holding eps fixed, via the clean-latent prediction.
LatentTensor ddim_move(const LatentTensor& z, const Tensor& eps, Timestep from, Timestep to,
                       const NoiseSchedule& schedule, const char* what) {
  require_same_shape(z.data, eps, what);
  if (!(z.level == from)) {
    throw ContractError(std::string(what) + ": latent is at level " + z.level.to_string() +
                        ", step expects " + from.to_string());
  }
  const double a_from = schedule.alpha_bar(from);
  const double a_to = schedule.alpha_bar(to);
  const double sig_from = std::sqrt(1.0 - a_from);
  const double inv_sqrt_from = 1.0 / std::sqrt(a_from);
  const double sqrt_to = std::sqrt(a_to);
  const double sig_to = std::sqrt(1.0 - a_to);

  LatentTensor out{Tensor(z.data.shape()), to};
  const std::size_t n = z.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double e = eps[i];
    const double x0 = (z.data[i] - sig_from * e) * inv_sqrt_from;
    out.data[i] = sqrt_to * x0 + sig_to * e;
  }
  if (!out.data.all_finite()) {
    throw NumericError(step_tag(from), std::string(what) + " produced a non-finite value moving " +
                                           from.to_string() + " -> " + to.to_string());
  }
  return out;
}

void check_t_prime(const TimestepPlan& plan, int t_prime) {
  if (t_prime < 1 || t_prime > plan.num_plan_steps()) {
    throw ContractError("t_prime " + std::to_string(t_prime) + " must lie in [1, " +
                        std::to_string(plan.num_plan_steps()) + "]");
  }
}

}  // namespace

std::string render_prompt(const std::string& templ, const std::string& object_word) {
  std::string out = templ;
  const std::string key = "{obj}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + object_word.size())) {
    out.replace(pos, key.size(), object_word);
  }
  return out;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  require_same_shape(eps_cond, eps_uncond, "cfg_combine");
  if (!(w >= 0.0)) throw ContractError("cfg_combine: guidance weight must be >= 0");
  if (w == 1.0) return eps_cond;
  if (w == 0.0) return eps_uncond;
  Tensor out(eps_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = w * eps_cond[i] + (1.0 - w) * eps_uncond[i];
  }
  return out;
}

LatentTensor sample_step(const LatentTensor& z_t, const Tensor& eps, Timestep t, Timestep t_prev,
                         const NoiseSchedule& schedule) {
  if (t.is_clean()) throw ContractError("sample_step: cannot step down from the clean level");
  if (!t_prev.is_clean() && t_prev.index() >= t.index()) {
    throw ContractError("sample_step: t_prev " + t_prev.to_string() + " is not earlier than t " +
                        t.to_string());
  }
  return ddim_move(z_t, eps, t, t_prev, schedule, "sample_step");
}

LatentTensor invert_step(const LatentTensor& z_prev, const Tensor& eps, Timestep t_prev, Timestep t,
                         const NoiseSchedule& schedule) {
  if (t.is_clean()) throw ContractError("invert_step: cannot step up to the clean level");
  if (!t_prev.is_clean() && t_prev.index() >= t.index()) {
    throw ContractError("invert_step: t " + t.to_string() + " is not later than t_prev " +
                        t_prev.to_string());
  }
  return ddim_move(z_prev, eps, t_prev, t, schedule, "invert_step");
}

Tensor guided_eps(const DenoiserBackend& backend, const Tensor& latent, int base_t,
                  const PromptCondition& prompt) {
  Tensor uncond = backend.predict_eps(latent, base_t, std::nullopt);
  if (!prompt.text) return uncond;
  Tensor cond = backend.predict_eps(latent, base_t, prompt.text);
  return cfg_combine(cond, uncond, prompt.guidance);
}

LatentTensor invert(const LatentTensor& z, const DenoiserBackend& backend,
                    const PromptCondition& prompt, const NoiseSchedule& schedule,
                    const TimestepPlan& plan, int t_prime, const StepKernels& kernels) {
  check_t_prime(plan, t_prime);
  if (!z.level.is_clean()) throw ContractError("invert: input latent must be clean");

  LatentTensor cur = z;
  for (int pos = 0; pos < t_prime; ++pos) {
    const Timestep from = plan.level_at(pos);
    const Timestep to = plan.level_at(pos + 1);
    const int eval_t = from.is_clean() ? plan.base_indices().front() : from.index();
    try {
      const Tensor eps = guided_eps(backend, cur.data, eval_t, prompt);
      cur = kernels.invert(cur, eps, from, to, schedule);
    } catch (const NumericError& e) {
      throw NumericError(pos, std::string("invert: ") + e.what());
    } catch (const std::exception& e) {
      std::throw_with_nested(StageError("invert step " + std::to_string(pos), e.what()));
    }
  }
  return cur;
}

LatentTensor reconstruct(const LatentTensor& z_tprime, const DenoiserBackend& backend,
                         const PromptCondition& prompt, const NoiseSchedule& schedule,
                         const TimestepPlan& plan, int t_prime, const StepKernels& kernels) {
  check_t_prime(plan, t_prime);
  if (!(z_tprime.level == plan.level_at(t_prime))) {
    throw ContractError("reconstruct: latent level " + z_tprime.level.to_string() +
                        " does not match plan position " + std::to_string(t_prime));
  }

  LatentTensor cur = z_tprime;
  for (int pos = t_prime - 1; pos >= 0; --pos) {
    const Timestep from = plan.level_at(pos + 1);
    const Timestep to = plan.level_at(pos);
    try {
      const Tensor eps = guided_eps(backend, cur.data, from.index(), prompt);
      cur = kernels.sample(cur, eps, from, to, schedule);
    } catch (const NumericError& e) {
      throw NumericError(pos, std::string("reconstruct: ") + e.what());
    } catch (const std::exception& e) {
      std::throw_with_nested(StageError("reconstruct step " + std::to_string(pos), e.what()));
    }
  }
  return cur;
}

}  // namespace divad
