// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divad/ddim.hpp"

namespace divad::selftest {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  bool mutate_invert_sign = false;  // CI mutation: negate eps inside invert_step
  std::uint64_t seed = 20260101;
};

/// invert_step with the noise estimate negated; must be caught by the roundtrip suite.
StepKernels mutated_kernels();
StepKernels kernels_for(const Options& options);

/// Constant-eps backends, T' in {1, 5, 10, 30, 50} on a 50-step plan, 100
/// latents: max |reconstruct(invert(z)) - z| <= 1e-6.
SuiteResult exact_inverse_suite(const Options& options);
/// analytic_gaussian_eps with mu = 0, sigma = 1 equals sqrt(1 - abar) z at every plan timestep.
SuiteResult closed_form_suite(const Options& options);
/// Roundtrip RMS decreases over plan densities 25 -> 50 -> 100.
SuiteResult convergence_suite(const Options& options);
/// Full-plan sampling from N(0, 1) reproduces the world mean and std within
/// 5% on the 100-step plan; the 50-step figures are reported alongside.
SuiteResult sampling_moments_suite(const Options& options);
/// AUROC, AP, F1-max and PRO against brute-force oracles on 100 instances,
/// complement identity, invariance under 10 monotone transforms.
SuiteResult metric_oracle_suite(const Options& options);

std::vector<SuiteResult> run_selftest(const Options& options);

}  // namespace divad::selftest
