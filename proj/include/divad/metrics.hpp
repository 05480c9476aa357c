// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "divad/anomaly_map.hpp"
#include "divad/dataset.hpp"
#include "divad/tensor.hpp"

namespace divad {

/// Probability that a random positive outscores a random negative, ties
/// counted one half. Labels are 0/1. Throws MetricError unless both classes
/// are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Step-wise average precision over the descending score sweep; tied scores
/// enter as one block. Throws MetricError without positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Maximum F1 over the thresholds "score >= v" for every distinct v.
double f1_max(std::span<const double> scores, std::span<const std::uint8_t> labels);
double f1_max(std::span<const float> scores, std::span<const std::uint8_t> labels);

inline constexpr double kProFprCap = 0.3;

/// Per-region overlap: regions are the 8-connected components of every GT
/// mask; FPR is taken over the pooled normal pixels. The mean-overlap vs FPR
/// curve is integrated by trapezoids up to `fpr_cap` and divided by it.
double pro_score(const std::vector<Map>& maps, const std::vector<ObjectMask>& gt_masks,
                 double fpr_cap = kProFprCap);

/// 8-connected component labels (1-based, 0 = background); returns the count.
int label_components(const ObjectMask& mask, std::vector<int>& labels);

struct MetricSet {
  double roc_i = 0.0;
  double roc_p = 0.0;
  double pro = 0.0;
  double ap_p = 0.0;
  double f1_p = 0.0;

  nlohmann::json to_json() const;
  static MetricSet from_json(const nlohmann::json& j);
  /// Unweighted mean of the five values.
  double average() const { return (roc_i + roc_p + pro + ap_p + f1_p) / 5.0; }
};

struct MetricsReport {
  std::map<std::string, MetricSet> per_class;
  MetricSet mean;  // unweighted mean over classes
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// Aligned plain-text table with columns ROC_I ROC_P PRO AP_P F1_P (percent).
  std::string table() const;
};

/// One scored test sample as seen by the evaluator.
struct EvalSample {
  std::string sample_id;
  std::string class_name;
  Label label = Label::normal;
  double image_score = 0.0;
  Map map;                            // final (masked) pixel map
  std::optional<ObjectMask> gt_mask;  // required for anomalies; absent means all-zero
};

/// Per-class ROC_I over image scores and pooled pixel ROC_P / AP_P / F1_P / PRO,
/// then unweighted class means. Throws DataError naming the first anomalous
/// sample without a mask, or whose mask does not match its map.
MetricsReport evaluate(const std::vector<EvalSample>& samples);

/// Pairs results with manifest records by position.
std::vector<EvalSample> make_eval_samples(const std::vector<AnomalyResult>& results, const Manifest& manifest,
                                          const std::vector<std::optional<ObjectMask>>& gt_masks);

}  // namespace divad
