// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary tensor container used on the wire and on disk:
//
//   offset 0  "DTEN"        magic
//   offset 4  u8 version    = 1
//   offset 5  u8 dtype      0 = float32 little-endian
//   offset 6  u8 rank
//   offset 7  u8 reserved   = 0
//   offset 8  rank x u32 LE dims
//   then      row-major payload

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "divad/tensor.hpp"

namespace divad {

inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::uint8_t kBlobFloat32 = 0;

/// Values are narrowed to float32; tensors decoded from a blob re-encode bit for bit.
std::string encode_blob(const Tensor& tensor);
/// Throws ProtocolError (endpoint "blob") on any malformed field.
Tensor decode_blob(std::string_view bytes);

void write_blob_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_blob_file(const std::filesystem::path& path);

/// JSON-headed frame: u32 LE header length, UTF-8 JSON header, then body.
struct Frame {
  nlohmann::json header;
  std::string body;
};

std::string encode_frame(const nlohmann::json& header, std::string_view body);
Frame decode_frame(std::string_view bytes);

}  // namespace divad
