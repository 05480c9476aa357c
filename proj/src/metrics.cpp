// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <sstream>

#include "divad/errors.hpp"

namespace divad {

namespace {

template <typename T>
void check_inputs(std::span<const T> scores, std::span<const std::uint8_t> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  }
  for (const T s : scores) {
    if (!std::isfinite(static_cast<double>(s))) throw MetricError(std::string(what) + ": non-finite score");
  }
}

/// Indices sorted by descending score.
template <typename T>
std::vector<std::uint32_t> descending_order(std::span<const T> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Calls block(tp, fp) after every tie block of the descending sweep.
template <typename T, typename F>
void sweep_blocks(std::span<const T> scores, std::span<const std::uint8_t> labels, F&& block) {
  const auto order = descending_order(scores);
  std::uint64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const T v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      if (labels[order[i]]) ++tp; else ++fp;
      ++i;
    }
    block(tp, fp);
  }
}

template <typename T>
double auroc_impl(std::span<const T> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels, "auroc");
  std::uint64_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auroc: both classes must be present");

  // Twice the Mann-Whitney U: each positive scores 2 per lower negative and 1 per tied one.
  std::uint64_t u2 = 0, prev_tp = 0, prev_fp = 0;
  sweep_blocks(scores, labels, [&](std::uint64_t tp, std::uint64_t fp) {
    const std::uint64_t bp = tp - prev_tp, bn = fp - prev_fp;
    u2 += bp * (2 * (neg - fp) + bn);
    prev_tp = tp;
    prev_fp = fp;
  });
  const std::uint64_t c = 2 * pos * neg;
  const double cd = static_cast<double>(c);
  // Round the smaller side so that flipping labels yields exactly 1 - value.
  if (u2 <= c - u2) return static_cast<double>(u2) / cd;
  return 1.0 - static_cast<double>(c - u2) / cd;
}

template <typename T>
std::uint64_t count_positives(std::span<const T> scores, std::span<const std::uint8_t> labels, const char* what) {
  check_inputs(scores, labels, what);
  std::uint64_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0) throw MetricError(std::string(what) + ": no positive labels");
  return pos;
}

template <typename T>
double ap_impl(std::span<const T> scores, std::span<const std::uint8_t> labels) {
  const double pos = static_cast<double>(count_positives(scores, labels, "average_precision"));
  double ap = 0.0, prev_recall = 0.0;
  sweep_blocks(scores, labels, [&](std::uint64_t tp, std::uint64_t fp) {
    const double recall = static_cast<double>(tp) / pos;
    if (recall > prev_recall) ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(tp + fp);
    prev_recall = recall;
  });
  return ap;
}

template <typename T>
double f1_impl(std::span<const T> scores, std::span<const std::uint8_t> labels) {
  const std::uint64_t pos = count_positives(scores, labels, "f1_max");
  double best = 0.0;
  sweep_blocks(scores, labels, [&](std::uint64_t tp, std::uint64_t fp) {
    best = std::max(best, 2.0 * static_cast<double>(tp) / static_cast<double>(pos + tp + fp));
  });
  return best;
}

}  // namespace

double auroc(std::span<const double> s, std::span<const std::uint8_t> l) { return auroc_impl(s, l); }
double auroc(std::span<const float> s, std::span<const std::uint8_t> l) { return auroc_impl(s, l); }
double average_precision(std::span<const double> s, std::span<const std::uint8_t> l) { return ap_impl(s, l); }
double average_precision(std::span<const float> s, std::span<const std::uint8_t> l) { return ap_impl(s, l); }
double f1_max(std::span<const double> s, std::span<const std::uint8_t> l) { return f1_impl(s, l); }
double f1_max(std::span<const float> s, std::span<const std::uint8_t> l) { return f1_impl(s, l); }

int label_components(const ObjectMask& mask, std::vector<int>& labels) {
  labels.assign(mask.pixels.size(), 0);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x) || labels[static_cast<std::size_t>(y) * mask.width + x]) continue;
      ++next;
      stack.assign(1, {y, x});
      labels[static_cast<std::size_t>(y) * mask.width + x] = next;
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
            const auto idx = static_cast<std::size_t>(ny) * mask.width + nx;
            if (!mask.pixels[idx] || labels[idx]) continue;
            labels[idx] = next;
            stack.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return next;
}

double pro_score(const std::vector<Map>& maps, const std::vector<ObjectMask>& gt_masks, double fpr_cap) {
  if (maps.size() != gt_masks.size()) throw ContractError("pro_score: maps and masks differ in count");
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ContractError("pro_score: fpr_cap must lie in (0, 1]");

  std::vector<float> scores;
  std::vector<double> weight;  // 1/|region| for region pixels, 0 for normal pixels
  std::vector<std::uint8_t> is_normal;
  std::size_t regions = 0, normals = 0;
  std::vector<int> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Map& m = maps[i];
    const ObjectMask& g = gt_masks[i];
    if (m.height != g.height || m.width != g.width) {
      throw ContractError("pro_score: map " + std::to_string(i) + " does not match its mask");
    }
    const int n = label_components(g, labels);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (!std::isfinite(m.values[p])) throw MetricError("pro_score: non-finite score");
      scores.push_back(m.values[p]);
      const int l = labels[p];
      weight.push_back(l ? 1.0 / static_cast<double>(sizes[static_cast<std::size_t>(l)]) : 0.0);
      is_normal.push_back(l ? 0 : 1);
      if (!l) ++normals;
    }
    regions += static_cast<std::size_t>(n);
  }
  if (regions == 0) throw MetricError("pro_score: no anomalous regions");
  if (normals == 0) throw MetricError("pro_score: no normal pixels to measure FPR");

  const auto order = descending_order(std::span<const float>(scores));
  double overlap_sum = 0.0, area = 0.0, prev_fpr = 0.0, prev_pro = 0.0;
  std::uint64_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const float v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      overlap_sum += weight[order[i]];
      fp += is_normal[order[i]];
      ++i;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(normals);
    const double pro = overlap_sum / static_cast<double>(regions);
    if (fpr >= fpr_cap) {
      const double t = fpr > prev_fpr ? (fpr_cap - prev_fpr) / (fpr - prev_fpr) : 1.0;
      const double pro_cap = prev_pro + t * (pro - prev_pro);
      area += (fpr_cap - prev_fpr) * (prev_pro + pro_cap) / 2.0;
      return std::clamp(area / fpr_cap, 0.0, 1.0);
    }
    area += (fpr - prev_fpr) * (prev_pro + pro) / 2.0;
    prev_fpr = fpr;
    prev_pro = pro;
  }
  return std::clamp(area / fpr_cap, 0.0, 1.0);  // unreachable: the last block has fpr 1
}

nlohmann::json MetricSet::to_json() const {
  return {{"roc_i", roc_i}, {"roc_p", roc_p}, {"pro", pro}, {"ap_p", ap_p}, {"f1_p", f1_p}};
}

MetricSet MetricSet::from_json(const nlohmann::json& j) {
  return {j.at("roc_i").get<double>(), j.at("roc_p").get<double>(), j.at("pro").get<double>(),
          j.at("ap_p").get<double>(), j.at("f1_p").get<double>()};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [name, m] : per_class) classes[name] = m.to_json();
  return {{"per_class", classes}, {"mean", mean.to_json()}, {"meta", meta}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  for (const auto& [name, m] : j.at("per_class").items()) r.per_class[name] = MetricSet::from_json(m);
  r.mean = MetricSet::from_json(j.at("mean"));
  if (j.contains("meta")) r.meta = j.at("meta");
  return r;
}

std::string MetricsReport::table() const {
  std::size_t width = 5;
  for (const auto& [name, m] : per_class) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[128];
  auto row = [&](const std::string& name, const MetricSet& m) {
    std::snprintf(buf, sizeof(buf), "  %6.1f %6.1f %6.1f %6.1f %6.1f\n", 100 * m.roc_i, 100 * m.roc_p,
                  100 * m.pro, 100 * m.ap_p, 100 * m.f1_p);
    out << name << std::string(width - name.size(), ' ') << buf;
  };
  out << "class" << std::string(width - 5, ' ') << "   ROC_I  ROC_P    PRO   AP_P   F1_P\n";
  for (const auto& [name, m] : per_class) row(name, m);
  if (!per_class.empty()) {
    out << std::string(width + 37, '-') << '\n';
    row("mean", mean);
  }
  return out.str();
}

namespace {

MetricSet evaluate_class(const std::string& cls, const std::vector<const EvalSample*>& samples) {
  std::vector<double> image_scores;
  std::vector<std::uint8_t> image_labels;
  std::vector<float> pixel_scores;
  std::vector<std::uint8_t> pixel_labels;
  std::vector<Map> maps;
  std::vector<ObjectMask> masks;
  for (const EvalSample* s : samples) {
    image_scores.push_back(s->image_score);
    image_labels.push_back(s->label == Label::anomaly ? 1 : 0);
    ObjectMask gt = s->gt_mask ? *s->gt_mask : ObjectMask(s->map.height, s->map.width, 0);
    pixel_scores.insert(pixel_scores.end(), s->map.values.begin(), s->map.values.end());
    pixel_labels.insert(pixel_labels.end(), gt.pixels.begin(), gt.pixels.end());
    maps.push_back(s->map);
    masks.push_back(std::move(gt));
  }
  try {
    MetricSet m;
    m.roc_i = auroc(std::span<const double>(image_scores), image_labels);
    m.roc_p = auroc(std::span<const float>(pixel_scores), pixel_labels);
    m.ap_p = average_precision(std::span<const float>(pixel_scores), pixel_labels);
    m.f1_p = f1_max(std::span<const float>(pixel_scores), pixel_labels);
    m.pro = pro_score(maps, masks);
    return m;
  } catch (const MetricError& e) {
    throw MetricError("class '" + cls + "': " + e.what());
  }
}

}  // namespace

MetricsReport evaluate(const std::vector<EvalSample>& samples) {
  std::map<std::string, std::vector<const EvalSample*>> by_class;
  for (const auto& s : samples) {
    if (s.label == Label::anomaly && !s.gt_mask) {
      throw DataError("sample '" + s.sample_id + "' is anomalous but has no ground-truth mask");
    }
    if (s.gt_mask && (s.gt_mask->height != s.map.height || s.gt_mask->width != s.map.width)) {
      throw DataError("sample '" + s.sample_id + "': mask size differs from map size");
    }
    by_class[s.class_name].push_back(&s);
  }
  if (by_class.empty()) throw MetricError("evaluate: no samples");

  std::vector<std::pair<std::string, std::future<MetricSet>>> jobs;
  for (const auto& [cls, group] : by_class) {
    jobs.emplace_back(cls, std::async(std::launch::async, [&cls = cls, &group = group] {
                        return evaluate_class(cls, group);
                      }));
  }
  MetricsReport report;
  for (auto& [cls, job] : jobs) report.per_class[cls] = job.get();
  const double n = static_cast<double>(report.per_class.size());
  for (const auto& [cls, m] : report.per_class) {
    report.mean.roc_i += m.roc_i / n;
    report.mean.roc_p += m.roc_p / n;
    report.mean.pro += m.pro / n;
    report.mean.ap_p += m.ap_p / n;
    report.mean.f1_p += m.f1_p / n;
  }
  return report;
}

std::vector<EvalSample> make_eval_samples(const std::vector<AnomalyResult>& results, const Manifest& manifest,
                                          const std::vector<std::optional<ObjectMask>>& gt_masks) {
  if (results.size() != manifest.records.size() || gt_masks.size() != manifest.records.size()) {
    throw ContractError("make_eval_samples: results, records and masks differ in count");
  }
  std::vector<EvalSample> out;
  out.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = manifest.records[i];
    out.push_back({results[i].sample_id, r.class_name, r.label, results[i].image_score, results[i].masked_map,
                   gt_masks[i]});
  }
  return out;
}

}  // namespace divad
