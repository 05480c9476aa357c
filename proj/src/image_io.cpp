// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "divad/errors.hpp"

namespace divad {

namespace {

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

cv::Mat decode_raw(std::string_view bytes, int flags) {
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U,
                    const_cast<char*>(bytes.data()));  // imdecode only reads
  cv::Mat m;
  try {
    m = cv::imdecode(buf, flags);
  } catch (const cv::Exception& e) {
    throw DataError(std::string("image decode failed: ") + e.what());
  }
  if (m.empty()) throw DataError("image decode failed: unrecognised or corrupt data");
  return m;
}

std::string encode_mat(const cv::Mat& m) {
  std::vector<uchar> out;
  if (!cv::imencode(".png", m, out)) throw DataError("PNG encode failed");
  return {out.begin(), out.end()};
}

std::uint8_t quantise(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Image decode_image(std::string_view bytes) {
  cv::Mat m = decode_raw(bytes, cv::IMREAD_UNCHANGED);
  const double scale = m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  if (m.depth() != CV_8U && m.depth() != CV_16U) throw DataError("unsupported image bit depth");
  const int src_c = m.channels();
  const int c = src_c == 1 ? 1 : 3;
  Image img(m.rows, m.cols, c);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int k = 0; k < c; ++k) {
        // OpenCV stores BGR(A); output is RGB.
        const int src_k = c == 1 ? 0 : 2 - k;
        const double v = m.depth() == CV_8U ? m.ptr<uchar>(y)[x * src_c + src_k]
                                            : m.ptr<std::uint16_t>(y)[x * src_c + src_k];
        img.at(y, x, k) = static_cast<float>(v * scale);
      }
    }
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("encode_png: only 1- and 3-channel images are supported");
  }
  cv::Mat m(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<uchar>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int k = 0; k < image.channels; ++k) {
        const int dst_k = image.channels == 1 ? 0 : 2 - k;
        row[x * image.channels + dst_k] = quantise(image.at(y, x, k));
      }
    }
  }
  return encode_mat(m);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_bytes(path, encode_png(image));
}

std::string encode_mask_png(const ObjectMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) m.ptr<uchar>(y)[x] = mask.at(y, x) ? 255 : 0;
  return encode_mat(m);
}

ObjectMask decode_mask_png(std::string_view bytes, int threshold) {
  cv::Mat m = decode_raw(bytes, cv::IMREAD_GRAYSCALE);
  ObjectMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) mask.at(y, x) = m.ptr<uchar>(y)[x] > threshold ? 1 : 0;
  return mask;
}

void write_heatmap_png(const std::filesystem::path& path, const Map& map) {
  cv::Mat m(map.height, map.width, CV_8UC1);
  const float peak = map.max_value();
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const float v = map.at(y, x);
      m.ptr<uchar>(y)[x] = peak > 0.0f ? quantise(std::max(v, 0.0f) / peak) : 0;
    }
  }
  write_file_bytes(path, encode_mat(m));
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractError("resize_bilinear: output size must be positive");
  if (image.empty()) throw ContractError("resize_bilinear: empty input");
  Image out(out_h, out_w, image.channels);
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int k = 0; k < image.channels; ++k) {
        const double top = (1.0 - wx) * image.at(y0, x0, k) + wx * image.at(y0, x1, k);
        const double bot = (1.0 - wx) * image.at(y1, x0, k) + wx * image.at(y1, x1, k);
        out.at(y, x, k) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

ObjectMask resize_nearest(const ObjectMask& mask, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractError("resize_nearest: output size must be positive");
  ObjectMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / out_h), mask.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / out_w), mask.width - 1);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace divad
