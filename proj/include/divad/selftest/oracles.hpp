// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Brute-force reference implementations. Quadratic or worse; meant for
// small instances only.

#include <cstdint>
#include <vector>

#include "divad/tensor.hpp"

namespace divad::oracle {

/// All-pairs count: wins + ties / 2 over positive/negative pairs.
double auroc_pairs(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

/// Thresholds "score >= v" for every distinct v, each evaluated by a full scan.
double average_precision_exhaustive(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);
double f1_max_exhaustive(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

/// Union-find region labelling and a full rescan per distinct threshold.
double pro_exhaustive(const std::vector<Map>& maps, const std::vector<ObjectMask>& gt, double fpr_cap = 0.3);

/// Direct per-pixel bilinear interpolation, half-pixel centres.
Map bilinear_direct(const Map& grid, int out_h, int out_w);

}  // namespace divad::oracle
