// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/selftest/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace divad::oracle {

double auroc_pairs(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

namespace {

struct Counts {
  double tp = 0, fp = 0;
};

Counts count_at(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels, double v) {
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= v) (labels[i] ? c.tp : c.fp) += 1.0;
  }
  return c;
}

std::vector<double> distinct_desc(const std::vector<double>& scores) {
  std::set<double> s(scores.begin(), scores.end());
  return {s.rbegin(), s.rend()};
}

}  // namespace

double average_precision_exhaustive(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double ap = 0.0, prev_r = 0.0;
  for (double v : distinct_desc(scores)) {
    const Counts c = count_at(scores, labels, v);
    const double r = c.tp / pos;
    ap += (r - prev_r) * (c.tp / (c.tp + c.fp));
    prev_r = r;
  }
  return ap;
}

double f1_max_exhaustive(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double best = 0.0;
  for (double v : distinct_desc(scores)) {
    const Counts c = count_at(scores, labels, v);
    if (c.tp == 0) continue;
    const double p = c.tp / (c.tp + c.fp), r = c.tp / pos;
    best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

/// Region id per pixel (-1 for background), ids unique within the image.
std::vector<int> regions_of(const ObjectMask& m) {
  const int n = m.height * m.width;
  UnionFind uf(n);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny >= 0 && nx >= 0 && ny < m.height && nx < m.width && m.at(ny, nx)) {
            uf.unite(y * m.width + x, ny * m.width + nx);
          }
        }
    }
  std::vector<int> out(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i)
    if (m.pixels[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(i)] = uf.find(i);
  return out;
}

}  // namespace

double pro_exhaustive(const std::vector<Map>& maps, const std::vector<ObjectMask>& gt, double fpr_cap) {
  std::vector<std::vector<int>> region_ids;
  std::vector<double> all;
  double normals = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    region_ids.push_back(regions_of(gt[i]));
    for (std::size_t p = 0; p < maps[i].size(); ++p) {
      all.push_back(maps[i].values[p]);
      if (!gt[i].pixels[p]) normals += 1;
    }
  }
  std::vector<std::pair<double, double>> curve = {{0.0, 0.0}};
  for (double v : distinct_desc(all)) {
    double fp = 0, overlap_sum = 0;
    int regions = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      std::map<int, std::pair<double, double>> hit;  // region -> (hit, size)
      for (std::size_t p = 0; p < maps[i].size(); ++p) {
        const bool pred = maps[i].values[p] >= v;
        const int r = region_ids[i][p];
        if (r < 0) {
          if (pred) fp += 1;
        } else {
          hit[r].second += 1;
          if (pred) hit[r].first += 1;
        }
      }
      for (const auto& [r, hs] : hit) {
        overlap_sum += hs.first / hs.second;
        ++regions;
      }
    }
    curve.emplace_back(fp / normals, overlap_sum / regions);
  }
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const auto [x0, y0] = curve[k - 1];
    auto [x1, y1] = curve[k];
    if (x0 >= fpr_cap) break;
    if (x1 > fpr_cap) {
      y1 = y0 + (y1 - y0) * (fpr_cap - x0) / (x1 - x0);
      x1 = fpr_cap;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area / fpr_cap;
}

Map bilinear_direct(const Map& grid, int out_h, int out_w) {
  Map out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      // Source coordinate of the output pixel centre, clamped to the grid.
      double sy = (y + 0.5) * grid.height / out_h - 0.5;
      double sx = (x + 0.5) * grid.width / out_w - 0.5;
      sy = std::min(std::max(sy, 0.0), grid.height - 1.0);
      sx = std::min(std::max(sx, 0.0), grid.width - 1.0);
      double acc = 0.0;
      for (int gy = 0; gy < grid.height; ++gy)
        for (int gx = 0; gx < grid.width; ++gx) {
          const double wy = std::max(0.0, 1.0 - std::abs(sy - gy));
          const double wx = std::max(0.0, 1.0 - std::abs(sx - gx));
          acc += wy * wx * grid.at(gy, gx);
        }
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace divad::oracle
