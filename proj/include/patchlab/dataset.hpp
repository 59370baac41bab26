#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/align.hpp"
#include "patchlab/common.hpp"
#include "patchlab/image.hpp"

namespace patchlab {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}
inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}
inline constexpr std::array<Split, 3> kAllSplits = {Split::train, Split::val, Split::test};

// A face in the canonical 150x130x3 frame with its label and provenance.
struct AlignedImage {
  std::string image_id;
  ImageU8 pixels;
  int label = 0;  // 0 = rosacea-negative, 1 = rosacea-positive
  Split split = Split::train;
  std::string source;

  void validate() const {
    if (pixels.height != kCanonicalHeight || pixels.width != kCanonicalWidth ||
        pixels.channels != kCanonicalChannels)
      throw IngestError(image_id, "aligned image must be 150x130x3");
    if (label != 0 && label != 1)
      throw IngestError(image_id, "label must be 0 or 1");
  }
};

struct ManifestEntry {
  std::string image_id;
  std::string path;  // relative to the manifest's directory
  int label = 0;
  Split split = Split::train;
};

// Lists every aligned image with label and split; counts are tallied per
// (split, label) and must agree with the entries.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string base_dir;  // set on load/save, not serialized

  std::map<std::pair<Split, int>, long> counts() const {
    std::map<std::pair<Split, int>, long> c;
    for (const auto& e : entries) c[{e.split, e.label}]++;
    return c;
  }
  long count(Split s, int label) const {
    long n = 0;
    for (const auto& e : entries)
      if (e.split == s && e.label == label) ++n;
    return n;
  }
  long count_label(int label) const {
    long n = 0;
    for (const auto& e : entries)
      if (e.label == label) ++n;
    return n;
  }

  std::string resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    if (p.is_absolute() || base_dir.empty()) return e.path;
    return (std::filesystem::path(base_dir) / p).string();
  }

  void validate(bool check_files) const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (!ids.insert(e.image_id).second)
        throw ConfigError("manifest: duplicate image_id '" + e.image_id + "'");
      if (e.label != 0 && e.label != 1)
        throw ConfigError("manifest: bad label for '" + e.image_id + "'");
      if (check_files && !std::filesystem::exists(resolve(e)))
        throw IoError("manifest: missing file " + resolve(e));
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "patchlab.manifest.v1";
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : entries)
      arr.push_back({{"image_id", e.image_id}, {"path", e.path},
                     {"label", e.label}, {"split", to_string(e.split)}});
    j["entries"] = arr;
    nlohmann::ordered_json cj;
    for (Split s : kAllSplits) {
      cj[to_string(s)] = {{"pos", count(s, 1)}, {"neg", count(s, 0)}};
    }
    j["counts"] = cj;
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j, std::string base_dir) {
    if (!j.contains("schema") || j.at("schema") != "patchlab.manifest.v1")
      throw ConfigError("manifest: unsupported or missing schema");
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("image_id").get<std::string>(),
                           e.at("path").get<std::string>(),
                           e.at("label").get<int>(),
                           split_from_string(e.at("split").get<std::string>())});
    }
    // stored counts must agree with the entry list
    if (j.contains("counts")) {
      for (Split s : kAllSplits) {
        const auto& cs = j.at("counts").at(to_string(s));
        if (cs.at("pos").get<long>() != m.count(s, 1) ||
            cs.at("neg").get<long>() != m.count(s, 0))
          throw ConfigError("manifest: counts disagree with entries");
      }
    }
    m.validate(false);
    return m;
  }

  void save(const std::string& path) {
    base_dir = std::filesystem::path(path).parent_path().string();
    validate(true);  // every entry's file must exist at manifest-write time
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path);
    out << to_json().dump(2) << "\n";
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path().string());
  }
};

// Eye-coordinate sidecar: one "image_id,lx,ly,rx,ry" row per image.
inline std::map<std::string, EyeAnnotation> load_eye_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open eye sidecar " + path);
  std::map<std::string, EyeAnnotation> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (line_no == 1 && t.rfind("image_id", 0) == 0) continue;  // optional header
    auto cols = split(t, ',');
    if (cols.size() != 5)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected image_id,lx,ly,rx,ry");
    EyeAnnotation ann;
    ann.image_id = trim(cols[0]);
    try {
      ann.left_eye = {std::stod(cols[1]), std::stod(cols[2])};
      ann.right_eye = {std::stod(cols[3]), std::stod(cols[4])};
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad coordinate");
    }
    out[ann.image_id] = ann;
  }
  return out;
}

struct IngestResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

namespace detail {
inline bool is_image_file(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".ppm" || e == ".pgm";
}
}  // namespace detail

// Walks root/{positive,negative}/{train,val,test}, aligns every decodable
// image whose id has a sidecar row, writes the aligned PNGs under out_dir
// and returns the manifest. Unreadable images and missing sidecar rows are
// skipped with a warning; an empty class is a hard error.
inline IngestResult ingest_dataset(const std::string& root, const std::string& out_dir,
                                   const CanonicalEyes& canon = {}) {
  namespace fs = std::filesystem;
  canon.validate();
  if (!fs::is_directory(root)) throw IoError("ingest root is not a directory: " + root);
  auto sidecar_path = fs::path(root) / "eyes.csv";
  if (!fs::exists(sidecar_path))
    throw IoError("missing eye sidecar " + sidecar_path.string());
  auto sidecar = load_eye_sidecar(sidecar_path.string());

  IngestResult result;
  result.manifest.base_dir = out_dir;
  const std::pair<const char*, int> classes[2] = {{"positive", 1}, {"negative", 0}};
  for (const auto& [class_name, label] : classes) {
    fs::path class_dir = fs::path(root) / class_name;
    if (!fs::is_directory(class_dir))
      throw ConfigError("ingest: class directory missing: " + class_dir.string());
    for (Split split : kAllSplits) {
      fs::path split_dir = class_dir / to_string(split);
      if (!fs::is_directory(split_dir)) continue;
      std::vector<fs::path> files;
      for (const auto& de : fs::directory_iterator(split_dir))
        if (de.is_regular_file() && detail::is_image_file(de.path()))
          files.push_back(de.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files) {
        std::string image_id = file.stem().string();
        auto ann = sidecar.find(image_id);
        if (ann == sidecar.end()) {
          result.warnings.push_back("no sidecar row for '" + image_id + "', skipped");
          continue;
        }
        ImageU8 raw;
        try {
          raw = read_image(file.string());
        } catch (const IoError& e) {
          result.warnings.push_back("unreadable image '" + image_id + "': " + e.what());
          continue;
        }
        ImageU8 aligned;
        try {
          aligned = align_face(raw, ann->second, canon);
        } catch (const IngestError& e) {
          result.warnings.push_back(std::string(e.what()) + ", skipped");
          continue;
        }
        fs::path rel = fs::path(to_string(split)) / class_name / (image_id + ".png");
        fs::path dst = fs::path(out_dir) / rel;
        fs::create_directories(dst.parent_path());
        write_png(aligned, dst.string());
        result.manifest.entries.push_back({image_id, rel.string(), label, split});
      }
    }
    if (result.manifest.count_label(label) == 0)
      throw ConfigError(std::string("ingest: class '") + class_name +
                        "' produced no usable images");
  }
  result.manifest.validate(true);
  return result;
}

// Loads the aligned images behind the manifest, optionally one split only.
inline std::vector<AlignedImage> load_aligned(const DatasetManifest& m,
                                              std::optional<Split> only = std::nullopt) {
  std::vector<AlignedImage> out;
  for (const auto& e : m.entries) {
    if (only && e.split != *only) continue;
    AlignedImage img;
    img.image_id = e.image_id;
    img.pixels = read_image(m.resolve(e));
    img.label = e.label;
    img.split = e.split;
    img.source = m.resolve(e);
    img.validate();
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace patchlab
