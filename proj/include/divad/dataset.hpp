// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divad/analytic_backends.hpp"
#include "divad/tensor.hpp"

namespace divad {

namespace fs = std::filesystem;

enum class Label { normal, anomaly };
std::string to_string(Label label);
Label label_from_string(const std::string& token);

struct SampleRecord {
  fs::path image_path;
  std::string class_name;
  Label label = Label::normal;
  std::optional<std::string> defect_type;
  std::optional<fs::path> mask_path;
  // 8-bit mask pixels above this value are anomalous (127 for 0/255 masks,
  // 0 for index-valued masks).
  int mask_threshold = 127;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::vector<std::string> warnings;
};

enum class Category { object, texture };

struct ClassConfig {
  std::string class_name;
  std::string prompt_object_word;
  bool apply_object_mask = true;
  Category category = Category::object;
};

/// Objects get object masks, textures (MVTec carpet/grid/leather/tile/wood)
/// do not. Underscores in the class name become spaces in the prompt word.
ClassConfig default_class_config(const std::string& class_name);

/// MVTec-AD / MPDD layout: <class>/test/<defect>/<img> with masks at
/// <class>/ground_truth/<defect>/<stem>_mask.png; "good" is normal. `root`
/// may be the dataset root or a single class directory.
Manifest scan_mvtec_layout(const fs::path& root);

/// VisA split CSV with columns object, split, label, image, mask (any order);
/// only split == "test" rows are kept. Paths are relative to `root`.
Manifest scan_visa_layout(const fs::path& root, const fs::path& split_csv);

/// Bilinear square resize; grayscale files are expanded to RGB.
Image load_image_resized(const fs::path& path, int side = 256);
/// Nearest-neighbour square resize, then binarise at `threshold`.
ObjectMask load_mask_resized(const fs::path& path, int side = 256, int threshold = 127);

/// Throws DataError listing every anomalous record whose mask is missing or
/// not decodable.
void validate_masks(const Manifest& manifest);

/// JSON-lines manifest, one record per line. Paths are written relative to
/// the manifest's directory and resolved against it on read.
void write_manifest(const fs::path& path, const Manifest& manifest);
Manifest read_manifest(const fs::path& path);

/// File-system-safe unique identifiers, one per record, stable for a given
/// manifest order.
std::vector<std::string> sample_ids(const Manifest& manifest);

// ---- synthetic desk-scale corpus -------------------------------------------

enum class AnomalyShape { square, blob };

struct AnomalySpec {
  AnomalyShape shape = AnomalyShape::square;
  int size = 8;                               // side (square) or diameter (blob), pixels
  float amplitude = 0.3f;
  std::array<float, 3> color = {1.0f, 0.2f, -0.6f};  // per-channel direction of the shift
  double anomaly_fraction = 0.5;
  int clutter_count = 0;                      // background specks outside the object
  int clutter_size = 4;
  float clutter_amplitude = 0.4f;
};

struct SyntheticWorldSpec {
  float noise_std = 0.05f;      // per-pixel std of normal texture
  float generic_mean = 0.5f;    // unconditional ("any image") world
  float generic_std = 0.5f;
  bool object_footprint = false; // textured disk on a flat background instead of full texture
};

struct SyntheticCorpus {
  Manifest manifest;
  std::vector<Image> images;
  std::vector<ObjectMask> gt_masks;  // all-zero for normal images
  GaussianWorldModel world;          // law of normal images, (C, H, W)
  GaussianWorldModel generic_world;
  ObjectMask footprint;
};

inline constexpr const char* kSyntheticClass = "synthetic";
inline constexpr const char* kSyntheticWorldFile = "world.dten";

/// Fully reproducible from `seed`. Anomalous images add amplitude * color over
/// a square or disk lying inside the object footprint; the GT mask is exactly
/// that region.
SyntheticCorpus generate_synthetic(std::uint64_t seed, int n_images, int side,
                                   const AnomalySpec& anomaly, const SyntheticWorldSpec& world = {});

/// Writes images, masks and manifest.jsonl into `dir`; returns the manifest path.
/// Writes images, masks, manifest.jsonl and the world file; returns the manifest path.
fs::path write_synthetic(const fs::path& dir, const SyntheticCorpus& corpus);

/// World models and footprint as one (5, C, S, S) blob: mean, std, generic
/// mean, generic std, footprint. The corpus read back has no images.
void write_synthetic_world(const fs::path& path, const SyntheticCorpus& corpus);
SyntheticCorpus read_synthetic_world(const fs::path& path);

}  // namespace divad
