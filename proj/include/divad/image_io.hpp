// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "divad/tensor.hpp"

namespace divad {

/// Decodes PNG/JPEG bytes to an RGB (or grayscale, for 1-channel files)
/// image with values in [0, 1]. Throws DataError on failure.
Image decode_image(std::string_view bytes);
Image read_image(const std::filesystem::path& path);

/// 8-bit PNG; values are clamped to [0, 1] before quantisation.
std::string encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// 8-bit grayscale mask PNG, 255 = object.
std::string encode_mask_png(const ObjectMask& mask);
/// Decodes an 8-bit mask; pixels > threshold become 1.
ObjectMask decode_mask_png(std::string_view bytes, int threshold = 127);

/// Heatmap rendering: linear map of [0, max] onto [0, 255]; an all-zero map
/// renders black.
void write_heatmap_png(const std::filesystem::path& path, const Map& map);

/// Bilinear (half-pixel centre) resize of every channel.
Image resize_bilinear(const Image& image, int out_h, int out_w);
ObjectMask resize_nearest(const ObjectMask& mask, int out_h, int out_w);

}  // namespace divad
