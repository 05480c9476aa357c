// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace divad {

/// Dense row-major tensor of arbitrary rank, double precision.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Interleaved (HWC) float image. Pixel values are nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const noexcept { return pixels.empty(); }
};

/// Single-channel real-valued H x W map (anomaly maps, dissimilarity grids).
struct Map {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Map() = default;
  Map(int h, int w, float fill = 0.0f);

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const noexcept { return values.size(); }
  float max_value() const;
};

/// Binary H x W mask; every entry is 0 or 1.
struct ObjectMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  ObjectMask() = default;
  ObjectMask(int h, int w, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

/// Per-location feature grid: `grid` has shape (grid_h, grid_w, dim).
struct PatchFeatures {
  Tensor grid;
  int patch_size = 1;

  int grid_h() const { return static_cast<int>(grid.dim(0)); }
  int grid_w() const { return static_cast<int>(grid.dim(1)); }
  int feature_dim() const { return static_cast<int>(grid.dim(2)); }
};

}  // namespace divad
