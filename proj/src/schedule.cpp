// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/schedule.hpp"

#include <cmath>

#include "divad/errors.hpp"

namespace divad {

Timestep Timestep::at(int base_index) {
  if (base_index < 0) throw BoundsError("negative base index " + std::to_string(base_index));
  return Timestep{base_index};
}

int Timestep::index() const {
  if (is_clean()) throw BoundsError("the clean level has no base index");
  return index_;
}

std::string Timestep::to_string() const {
  return is_clean() ? std::string("CLEAN") : std::to_string(index_);
}

std::string to_string(BetaSpacing spacing) {
  return spacing == BetaSpacing::linear ? "linear" : "scaled_linear";
}

BetaSpacing beta_spacing_from_string(const std::string& name) {
  if (name == "linear") return BetaSpacing::linear;
  if (name == "scaled_linear") return BetaSpacing::scaled_linear;
  throw ConfigError("spacing", "expected linear or scaled_linear, got '" + name + "'");
}

nlohmann::json ScheduleConfig::to_json() const {
  return {{"num_base_steps", num_base_steps},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"spacing", to_string(spacing)}};
}

ScheduleConfig ScheduleConfig::from_json(const nlohmann::json& j) {
  ScheduleConfig c;
  try {
    if (j.contains("num_base_steps")) c.num_base_steps = j.at("num_base_steps").get<int>();
    if (j.contains("beta_start")) c.beta_start = j.at("beta_start").get<double>();
    if (j.contains("beta_end")) c.beta_end = j.at("beta_end").get<double>();
    if (j.contains("spacing")) c.spacing = beta_spacing_from_string(j.at("spacing").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schedule", e.what());
  }
  return c;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("num_base_steps", "schedule needs at least one step");
  NoiseSchedule s;
  s.alpha_bars_.reserve(betas.size());
  double acc = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("betas", "beta[" + std::to_string(i) + "] = " + std::to_string(b) +
                                     " is outside (0, 1)");
    }
    acc *= 1.0 - b;
    s.alpha_bars_.push_back(acc);
  }
  s.betas_ = std::move(betas);
  return s;
}

double NoiseSchedule::alpha_bar(Timestep t) const {
  if (t.is_clean()) return 1.0;
  const int i = t.index();
  if (i >= num_base_steps()) {
    throw BoundsError("base index " + std::to_string(i) + " outside schedule of " +
                      std::to_string(num_base_steps()) + " steps");
  }
  return alpha_bars_[static_cast<std::size_t>(i)];
}

double alpha_bar_at(const NoiseSchedule& schedule, Timestep t) { return schedule.alpha_bar(t); }

NoiseSchedule build_schedule(const ScheduleConfig& config) {
  if (config.num_base_steps < 1) throw ConfigError("num_base_steps", "must be >= 1");
  if (!(config.beta_start > 0.0)) throw ConfigError("beta_start", "must be > 0");
  if (!(config.beta_end < 1.0)) throw ConfigError("beta_end", "must be < 1");
  if (config.beta_start > config.beta_end) {
    throw ConfigError("beta_start", "must not exceed beta_end");
  }

  const int n = config.num_base_steps;
  std::vector<double> betas(static_cast<std::size_t>(n));
  const double lo = config.spacing == BetaSpacing::scaled_linear ? std::sqrt(config.beta_start)
                                                                 : config.beta_start;
  const double hi = config.spacing == BetaSpacing::scaled_linear ? std::sqrt(config.beta_end)
                                                                 : config.beta_end;
  for (int s = 0; s < n; ++s) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(s) / (n - 1);
    const double v = lo + frac * (hi - lo);
    betas[static_cast<std::size_t>(s)] = config.spacing == BetaSpacing::scaled_linear ? v * v : v;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

TimestepPlan::TimestepPlan(std::vector<int> base_indices) : indices_(std::move(base_indices)) {
  if (indices_.empty()) throw ConfigError("plan_steps", "plan must have at least one step");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || (i > 0 && indices_[i] <= indices_[i - 1])) {
      throw ConfigError("plan_steps", "plan indices must be non-negative and strictly increasing");
    }
  }
}

Timestep TimestepPlan::level_at(int position) const {
  if (position < 0 || position > num_plan_steps()) {
    throw BoundsError("plan position " + std::to_string(position) + " outside [0, " +
                      std::to_string(num_plan_steps()) + "]");
  }
  return position == 0 ? Timestep::clean()
                       : Timestep::at(indices_[static_cast<std::size_t>(position - 1)]);
}

TimestepPlan build_plan(int num_base_steps, int num_plan_steps) {
  if (num_plan_steps < 1) throw ConfigError("plan_steps", "must be >= 1");
  if (num_plan_steps > num_base_steps) {
    throw ConfigError("plan_steps", "cannot exceed num_base_steps (" +
                                         std::to_string(num_base_steps) + ")");
  }
  const int stride = num_base_steps / num_plan_steps;
  std::vector<int> idx(static_cast<std::size_t>(num_plan_steps));
  for (int i = 0; i < num_plan_steps; ++i) idx[static_cast<std::size_t>(i)] = i * stride;
  return TimestepPlan(std::move(idx));
}

}  // namespace divad
