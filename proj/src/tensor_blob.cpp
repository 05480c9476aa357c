// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/tensor_blob.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "divad/errors.hpp"

namespace divad {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

[[noreturn]] void malformed(const std::string& what) { throw ProtocolError("blob", what); }

}  // namespace

std::string encode_blob(const Tensor& tensor) {
  if (tensor.rank() > 255) throw ContractError("encode_blob: rank exceeds 255");
  std::string out = "DTEN";
  out.push_back(static_cast<char>(kBlobVersion));
  out.push_back(static_cast<char>(kBlobFloat32));
  out.push_back(static_cast<char>(tensor.rank()));
  out.push_back('\0');
  for (std::size_t d : tensor.shape()) {
    if (d > 0xFFFFFFFFu) throw ContractError("encode_blob: dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + tensor.size() * 4);
  for (double v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_blob(std::string_view bytes) {
  if (bytes.size() < 8) malformed("truncated header (" + std::to_string(bytes.size()) + " bytes)");
  if (bytes.substr(0, 4) != "DTEN") malformed("bad magic");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kBlobVersion) {
    malformed("unsupported blob version " + std::to_string(version) + " (expected " +
              std::to_string(kBlobVersion) + ")");
  }
  const auto dtype = static_cast<std::uint8_t>(bytes[5]);
  if (dtype != kBlobFloat32) malformed("unsupported dtype " + std::to_string(dtype));
  const std::size_t rank = static_cast<std::uint8_t>(bytes[6]);
  if (bytes[7] != '\0') malformed("reserved byte is not zero");
  const std::size_t header = 8 + 4 * rank;
  if (bytes.size() < header) malformed("truncated dims");

  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 8 + 4 * i);
    count *= shape[i];
  }
  if (bytes.size() - header != count * 4) {
    malformed("payload is " + std::to_string(bytes.size() - header) + " bytes, shape " +
              shape_string(shape) + " needs " + std::to_string(count * 4));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  return Tensor(std::move(shape), std::move(values));
}

void write_blob_file(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_blob(tensor);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

Tensor read_blob_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_blob(bytes);
  } catch (const ProtocolError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string encode_frame(const nlohmann::json& header, std::string_view body) {
  const std::string text = header.dump();
  std::string out;
  out.reserve(4 + text.size() + body.size());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.append(body.data(), body.size());
  return out;
}

Frame decode_frame(std::string_view bytes) {
  if (bytes.size() < 4) throw ProtocolError("frame", "truncated length prefix");
  const std::size_t len = get_u32(bytes, 0);
  if (bytes.size() - 4 < len) throw ProtocolError("frame", "header length exceeds payload");
  Frame f;
  try {
    f.header = nlohmann::json::parse(bytes.substr(4, len));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("frame", std::string("header is not JSON: ") + e.what());
  }
  f.body = std::string(bytes.substr(4 + len));
  return f;
}

}  // namespace divad
