// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace divad {

/// Noise level of a latent: either a base-step index of the schedule or the
/// clean (noise-free) state, whose alpha-bar is exactly 1.
class Timestep {
 public:
  static constexpr Timestep clean() noexcept { return Timestep{}; }
  static Timestep at(int base_index);

  constexpr bool is_clean() const noexcept { return index_ < 0; }
  int index() const;

  friend constexpr bool operator==(Timestep, Timestep) = default;
  std::string to_string() const;

 private:
  constexpr Timestep() = default;
  explicit constexpr Timestep(int index) : index_(index) {}
  int index_ = -1;
};

enum class BetaSpacing { linear, scaled_linear };

struct ScheduleConfig {
  int num_base_steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  BetaSpacing spacing = BetaSpacing::scaled_linear;

  nlohmann::json to_json() const;
  static ScheduleConfig from_json(const nlohmann::json& j);
};

std::string to_string(BetaSpacing spacing);
BetaSpacing beta_spacing_from_string(const std::string& name);

/// Per-base-step noise rates and their cumulative signal retention
/// alpha_bar[t] = prod_{s<=t} (1 - beta[s]). Immutable once built.
class NoiseSchedule {
 public:
  /// Throws ConfigError unless every beta lies in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }
  int num_base_steps() const noexcept { return static_cast<int>(betas_.size()); }

  /// 1 for the clean level; BoundsError for indices outside the schedule.
  double alpha_bar(Timestep t) const;

 private:
  NoiseSchedule() = default;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule build_schedule(const ScheduleConfig& config);

/// Free-function spelling of NoiseSchedule::alpha_bar.
double alpha_bar_at(const NoiseSchedule& schedule, Timestep t);

/// Subsampled, strictly increasing base-step indices traversed by sampling
/// (descending) and inversion (ascending).
///
/// Plan *positions* count completed inversion steps: position 0 is the clean
/// latent and position p >= 1 sits at base index `base_indices()[p - 1]`.
class TimestepPlan {
 public:
  explicit TimestepPlan(std::vector<int> base_indices);

  const std::vector<int>& base_indices() const noexcept { return indices_; }
  int num_plan_steps() const noexcept { return static_cast<int>(indices_.size()); }

  /// Noise level at a plan position in [0, num_plan_steps()].
  Timestep level_at(int position) const;

 private:
  std::vector<int> indices_;
};

/// Leading spacing: index i maps to i * floor(num_base_steps / num_plan_steps).
TimestepPlan build_plan(int num_base_steps, int num_plan_steps);

}  // namespace divad
