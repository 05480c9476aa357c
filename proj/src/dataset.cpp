// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "divad/errors.hpp"
#include "divad/image_io.hpp"
#include "divad/tensor_blob.hpp"

namespace divad {

namespace {

const std::set<std::string> kMvtecTextures = {"carpet", "grid", "leather", "tile", "wood"};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && is_image_file(e.path()))) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void scan_mvtec_class(const fs::path& class_dir, Manifest& manifest, std::vector<std::string>& missing) {
  const std::string cls = class_dir.filename().string();
  const fs::path test = class_dir / "test";
  const auto defects = sorted_entries(test, true);
  std::size_t found = 0;
  for (const auto& defect_dir : defects) {
    const std::string defect = defect_dir.filename().string();
    const bool normal = defect == "good";
    for (const auto& img : sorted_entries(defect_dir, false)) {
      SampleRecord r;
      r.image_path = img;
      r.class_name = cls;
      r.label = normal ? Label::normal : Label::anomaly;
      if (!normal) {
        r.defect_type = defect;
        const fs::path mask = class_dir / "ground_truth" / defect / (img.stem().string() + "_mask.png");
        if (fs::is_regular_file(mask)) {
          r.mask_path = mask;
        } else {
          missing.push_back(img.string());
        }
      }
      manifest.records.push_back(std::move(r));
      ++found;
    }
  }
  if (found == 0) manifest.warnings.push_back("class '" + cls + "' has no test images");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (unsigned char c : s) out.push_back(std::isalnum(c) || c == '-' ? static_cast<char>(c) : '_');
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
}

fs::path relative_to(const fs::path& base, const fs::path& p) {
  if (!p.is_absolute()) return p;
  const fs::path rel = p.lexically_relative(base);
  return rel.empty() ? p : rel;
}

Image to_rgb(Image img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = img.at(y, x, 0);
  return out;
}

}  // namespace

std::string to_string(Label label) { return label == Label::normal ? "normal" : "anomaly"; }

Label label_from_string(const std::string& token) {
  if (token == "normal") return Label::normal;
  if (token == "anomaly") return Label::anomaly;
  throw DataError("label must be 'normal' or 'anomaly', got '" + token + "'");
}

ClassConfig default_class_config(const std::string& class_name) {
  ClassConfig c;
  c.class_name = class_name;
  c.prompt_object_word = class_name;
  std::replace(c.prompt_object_word.begin(), c.prompt_object_word.end(), '_', ' ');
  if (kMvtecTextures.count(class_name)) {
    c.category = Category::texture;
    c.apply_object_mask = false;
  }
  return c;
}

Manifest scan_mvtec_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  Manifest manifest;
  std::vector<std::string> missing;
  if (fs::is_directory(root / "test")) {
    scan_mvtec_class(root, manifest, missing);
  } else {
    const auto classes = sorted_entries(root, true);
    if (classes.empty()) manifest.warnings.push_back("no class directories under " + root.string());
    for (const auto& cls : classes) scan_mvtec_class(cls, manifest, missing);
  }
  if (!missing.empty()) {
    std::string msg = "missing ground_truth masks for " + std::to_string(missing.size()) + " image(s):";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return manifest;
}

Manifest scan_visa_layout(const fs::path& root, const fs::path& split_csv) {
  std::ifstream in(split_csv);
  if (!in) throw DataError("cannot open split CSV " + split_csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(split_csv.string() + ": empty CSV");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"object", "split", "label", "image", "mask"}) {
    if (!col.count(need)) {
      throw DataError(split_csv.string() + ": header lacks column '" + need +
                      "' (expected object, split, label, image, mask)");
    }
  }

  Manifest manifest;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError(split_csv.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(f.size()) + " fields, header has " + std::to_string(header.size()));
    }
    if (f[col["split"]] != "test") continue;
    SampleRecord r;
    r.class_name = f[col["object"]];
    try {
      r.label = label_from_string(f[col["label"]]);
    } catch (const DataError& e) {
      throw DataError(split_csv.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
    r.image_path = resolve(root, f[col["image"]]);
    r.mask_threshold = 0;
    const std::string& mask = f[col["mask"]];
    if (!mask.empty()) r.mask_path = resolve(root, mask);
    if (r.label == Label::anomaly) {
      r.defect_type = "anomaly";
      if (!r.mask_path) {
        throw DataError(split_csv.string() + ": row " + std::to_string(row) + ": anomaly without mask");
      }
    }
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

Image load_image_resized(const fs::path& path, int side) {
  Image img = to_rgb(read_image(path));
  if (img.height == side && img.width == side) return img;
  return resize_bilinear(img, side, side);
}

ObjectMask load_mask_resized(const fs::path& path, int side, int threshold) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mask " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ObjectMask m;
  try {
    m = decode_mask_png(bytes, threshold);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.height == side && m.width == side) return m;
  return resize_nearest(m, side, side);
}

void validate_masks(const Manifest& manifest) {
  std::vector<std::string> bad;
  for (const auto& r : manifest.records) {
    if (r.label != Label::anomaly) continue;
    if (!r.mask_path) {
      bad.push_back(r.image_path.string() + " (no mask)");
      continue;
    }
    try {
      (void)load_mask_resized(*r.mask_path, 8, r.mask_threshold);
    } catch (const DataError& e) {
      bad.push_back(r.mask_path->string() + " (" + e.what() + ")");
    }
  }
  if (!bad.empty()) {
    std::string msg = std::to_string(bad.size()) + " anomalous sample(s) lack a usable mask:";
    for (const auto& b : bad) msg += " " + b;
    throw DataError(msg);
  }
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& r : manifest.records) {
    nlohmann::json j = {{"image_path", relative_to(base, r.image_path).generic_string()},
                        {"class_name", r.class_name},
                        {"label", to_string(r.label)},
                        {"defect_type", nullptr},
                        {"mask_path", nullptr},
                        {"mask_threshold", r.mask_threshold}};
    if (r.defect_type) j["defect_type"] = *r.defect_type;
    if (r.mask_path) j["mask_path"] = relative_to(base, *r.mask_path).generic_string();
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("short write to " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  Manifest m;
  std::set<fs::path> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleRecord r;
      r.image_path = resolve(base, j.at("image_path").get<std::string>());
      r.class_name = j.at("class_name").get<std::string>();
      r.label = label_from_string(j.at("label").get<std::string>());
      if (j.contains("defect_type") && !j.at("defect_type").is_null()) r.defect_type = j.at("defect_type").get<std::string>();
      if (j.contains("mask_path") && !j.at("mask_path").is_null()) {
        r.mask_path = resolve(base, j.at("mask_path").get<std::string>());
      }
      r.mask_threshold = j.value("mask_threshold", 127);
      if (!seen.insert(r.image_path).second) {
        m.warnings.push_back("duplicate image_path " + r.image_path.string() + " (line " +
                             std::to_string(lineno) + ")");
      }
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

std::vector<std::string> sample_ids(const Manifest& manifest) {
  std::vector<std::string> ids;
  std::map<std::string, int> used;
  for (const auto& r : manifest.records) {
    std::string id = sanitize(r.class_name) + "_" + sanitize(r.defect_type.value_or(to_string(r.label))) +
                     "_" + sanitize(r.image_path.stem().string());
    const int n = ++used[id];
    if (n > 1) id += "_" + std::to_string(n);
    ids.push_back(std::move(id));
  }
  return ids;
}

// ---- synthetic corpus -------------------------------------------------------

namespace {

struct Region {
  int y0, x0, size;
  AnomalyShape shape;
  bool contains(int y, int x) const {
    if (y < y0 || x < x0 || y >= y0 + size || x >= x0 + size) return false;
    if (shape == AnomalyShape::square) return true;
    const double c = (size - 1) / 2.0;
    const double dy = y - y0 - c, dx = x - x0 - c;
    return dy * dy + dx * dx <= (size / 2.0) * (size / 2.0);
  }
};

bool region_inside(const Region& r, const ObjectMask& footprint) {
  for (int y = r.y0; y < r.y0 + r.size; ++y)
    for (int x = r.x0; x < r.x0 + r.size; ++x)
      if (r.contains(y, x) && !footprint.at(y, x)) return false;
  return true;
}

bool region_outside(const Region& r, const ObjectMask& footprint) {
  for (int y = r.y0; y < r.y0 + r.size; ++y)
    for (int x = r.x0; x < r.x0 + r.size; ++x)
      if (r.contains(y, x) && footprint.at(y, x)) return false;
  return true;
}

Region place(std::mt19937_64& rng, int side, int size, AnomalyShape shape, const ObjectMask& footprint,
             bool inside) {
  std::uniform_int_distribution<int> pos(0, side - size);
  Region r{0, 0, size, shape};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    r.y0 = pos(rng);
    r.x0 = pos(rng);
    if (inside ? region_inside(r, footprint) : region_outside(r, footprint)) return r;
  }
  return r;  // no admissible spot: keep the last draw
}

}  // namespace

SyntheticCorpus generate_synthetic(std::uint64_t seed, int n_images, int side, const AnomalySpec& anomaly,
                                   const SyntheticWorldSpec& world) {
  if (side < 16) throw ContractError("generate_synthetic: side must be >= 16");
  if (n_images < 0) throw ContractError("generate_synthetic: n_images must be >= 0");
  if (anomaly.size < 1 || anomaly.size > side) {
    throw ContractError("generate_synthetic: anomaly size " + std::to_string(anomaly.size) +
                        " does not fit a " + std::to_string(side) + " px image");
  }
  if (anomaly.clutter_count > 0 && (anomaly.clutter_size < 1 || anomaly.clutter_size > side)) {
    throw ContractError("generate_synthetic: clutter size does not fit the image");
  }
  if (!(anomaly.anomaly_fraction >= 0.0 && anomaly.anomaly_fraction <= 1.0)) {
    throw ContractError("generate_synthetic: anomaly_fraction must lie in [0, 1]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<float> gauss(0.0f, 1.0f);

  const auto s = static_cast<std::size_t>(side);
  ObjectMask footprint(side, side, world.object_footprint ? 0 : 1);
  if (world.object_footprint) {
    const double c = (side - 1) / 2.0, radius = 0.42 * side;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        footprint.at(y, x) = (y - c) * (y - c) + (x - c) * (x - c) <= radius * radius ? 1 : 0;
  }

  // Smooth colour texture on the object, flat background elsewhere.
  const std::array<float, 3> background = {0.30f, 0.35f, 0.40f};
  std::array<double, 3> phase{};
  for (auto& p : phase) p = unit(rng);
  Tensor mean({3, s, s});
  for (std::size_t k = 0; k < 3; ++k) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double u = static_cast<double>(x) / side, v = static_cast<double>(y) / side;
        const double tex = 0.5 + 0.2 * std::sin(2.0 * std::numbers::pi * (2.0 * u + phase[k])) *
                                     std::cos(2.0 * std::numbers::pi * (1.5 * v + phase[k]));
        mean[(k * s + y) * s + x] = footprint.at(y, x) ? static_cast<float>(tex) : background[k];
      }
    }
  }

  SyntheticCorpus corpus{
      Manifest{},
      {},
      {},
      GaussianWorldModel(mean, Tensor(mean.shape(), world.noise_std)),
      GaussianWorldModel::uniform(mean.shape(), world.generic_mean, world.generic_std),
      footprint};

  const int n_anomalous = static_cast<int>(std::lround(anomaly.anomaly_fraction * n_images));
  std::vector<int> order(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_anomalous(static_cast<std::size_t>(n_images), false);
  for (int i = 0; i < n_anomalous; ++i) is_anomalous[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  for (int i = 0; i < n_images; ++i) {
    Image img(side, side, 3);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        for (int k = 0; k < 3; ++k)
          img.at(y, x, k) = mean[(static_cast<std::size_t>(k) * s + y) * s + x] + world.noise_std * gauss(rng);

    for (int c = 0; c < anomaly.clutter_count; ++c) {
      const Region r = place(rng, side, anomaly.clutter_size, AnomalyShape::square, footprint, false);
      for (int y = r.y0; y < r.y0 + r.size; ++y)
        for (int x = r.x0; x < r.x0 + r.size; ++x)
          for (int k = 0; k < 3; ++k) img.at(y, x, k) += anomaly.clutter_amplitude * anomaly.color[k];
    }

    ObjectMask gt(side, side);
    SampleRecord rec;
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.png", i);
    rec.image_path = fs::path("images") / name;
    rec.class_name = kSyntheticClass;
    if (is_anomalous[static_cast<std::size_t>(i)]) {
      const Region r = place(rng, side, anomaly.size, anomaly.shape, footprint, true);
      for (int y = r.y0; y < r.y0 + r.size; ++y) {
        for (int x = r.x0; x < r.x0 + r.size; ++x) {
          if (!r.contains(y, x)) continue;
          gt.at(y, x) = 1;
          for (int k = 0; k < 3; ++k) img.at(y, x, k) += anomaly.amplitude * anomaly.color[k];
        }
      }
      rec.label = Label::anomaly;
      rec.defect_type = anomaly.shape == AnomalyShape::square ? "square" : "blob";
      std::snprintf(name, sizeof(name), "img_%04d_mask.png", i);
      rec.mask_path = fs::path("masks") / name;
    }
    corpus.manifest.records.push_back(std::move(rec));
    corpus.images.push_back(std::move(img));
    corpus.gt_masks.push_back(std::move(gt));
  }
  return corpus;
}

fs::path write_synthetic(const fs::path& dir, const SyntheticCorpus& corpus) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  Manifest m = corpus.manifest;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto& r = m.records[i];
    r.image_path = fs::absolute(dir / r.image_path).lexically_normal();
    write_png(r.image_path, corpus.images[i]);
    if (r.mask_path) {
      r.mask_path = fs::absolute(dir / *r.mask_path).lexically_normal();
      std::ofstream out(*r.mask_path, std::ios::binary);
      const std::string png = encode_mask_png(corpus.gt_masks[i]);
      out.write(png.data(), static_cast<std::streamsize>(png.size()));
    }
  }
  write_synthetic_world(dir / kSyntheticWorldFile, corpus);
  const fs::path manifest_path = dir / "manifest.jsonl";
  write_manifest(manifest_path, m);
  return manifest_path;
}

void write_synthetic_world(const fs::path& path, const SyntheticCorpus& corpus) {
  const auto& shape = corpus.world.mean.shape();
  const std::size_t n = corpus.world.mean.size(), plane = shape[1] * shape[2];
  Tensor t({5, shape[0], shape[1], shape[2]});
  const Tensor* parts[] = {&corpus.world.mean, &corpus.world.std, &corpus.generic_world.mean,
                           &corpus.generic_world.std};
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t i = 0; i < n; ++i) t[p * n + i] = (*parts[p])[i];
  for (std::size_t i = 0; i < n; ++i) t[4 * n + i] = corpus.footprint.pixels[i % plane];
  write_blob_file(path, t);
}

SyntheticCorpus read_synthetic_world(const fs::path& path) {
  const Tensor t = read_blob_file(path);
  if (t.rank() != 4 || t.dim(0) != 5 || t.dim(2) != t.dim(3)) {
    throw DataError(path.string() + ": expected a (5, C, S, S) world tensor, got " + shape_string(t.shape()));
  }
  const std::vector<std::size_t> shape = {t.dim(1), t.dim(2), t.dim(3)};
  const std::size_t n = shape[0] * shape[1] * shape[2];
  auto part = [&](std::size_t p) {
    Tensor out(shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = t[p * n + i];
    return out;
  };
  const int side = static_cast<int>(shape[1]);
  ObjectMask footprint(side, side);
  for (std::size_t i = 0; i < footprint.pixels.size(); ++i) footprint.pixels[i] = t[4 * n + i] > 0.5 ? 1 : 0;
  try {
    return SyntheticCorpus{Manifest{}, {}, {}, GaussianWorldModel(part(0), part(1)),
                           GaussianWorldModel(part(2), part(3)), std::move(footprint)};
  } catch (const ContractError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace divad
