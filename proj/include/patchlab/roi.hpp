#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/common.hpp"
#include "patchlab/image.hpp"

namespace patchlab {

// The four facial regions, viewer frame: LC is the image-left cheek
// (subject's anatomical right), RC the image-right cheek.
enum class Region { F, N, LC, RC };

enum class Scale { large, medium, small };

inline constexpr std::array<Region, 4> kAllRegions = {Region::F, Region::N,
                                                      Region::LC, Region::RC};
inline constexpr std::array<Scale, 3> kAllScales = {Scale::large, Scale::medium,
                                                    Scale::small};

inline const char* to_string(Region r) {
  switch (r) {
    case Region::F: return "F";
    case Region::N: return "N";
    case Region::LC: return "LC";
    case Region::RC: return "RC";
  }
  return "?";
}
inline const char* to_string(Scale s) {
  switch (s) {
    case Scale::large: return "large";
    case Scale::medium: return "medium";
    case Scale::small: return "small";
  }
  return "?";
}
inline Region region_from_string(const std::string& s) {
  if (s == "F") return Region::F;
  if (s == "N") return Region::N;
  if (s == "LC") return Region::LC;
  if (s == "RC") return Region::RC;
  throw ConfigError("unknown region '" + s + "' (expected F, N, LC or RC)");
}
inline Scale scale_from_string(const std::string& s) {
  if (s == "large") return Scale::large;
  if (s == "medium") return Scale::medium;
  if (s == "small") return Scale::small;
  throw ConfigError("unknown scale '" + s + "' (expected large, medium or small)");
}

// A named subset of regions that survives masking, or the full-face baseline.
// The name is canonical: regions in F, N, LC, RC order joined by '+'.
struct PatchConfig {
  std::string name;
  std::set<Region> regions;  // empty iff full_face
  bool full_face = false;

  static PatchConfig make_full_face() { return {"FULL_FACE", {}, true}; }

  static PatchConfig from_regions(const std::set<Region>& rs) {
    if (rs.empty()) throw ConfigError("patch config needs at least one region");
    std::string n;
    for (Region r : kAllRegions) {
      if (rs.count(r)) {
        if (!n.empty()) n += '+';
        n += to_string(r);
      }
    }
    return {n, rs, false};
  }

  // Accepts "FULL_FACE" or '+'-joined region tokens in any order; the
  // resulting name is always canonical.
  static PatchConfig parse(const std::string& text) {
    if (text == "FULL_FACE") return make_full_face();
    std::set<Region> rs;
    for (const auto& tok : split(text, '+')) {
      std::string t = trim(tok);
      if (t.empty()) throw ConfigError("empty region token in '" + text + "'");
      rs.insert(region_from_string(t));
    }
    return from_regions(rs);
  }

  bool operator==(const PatchConfig& o) const {
    return full_face == o.full_face && regions == o.regions;
  }
};

// All fifteen configurations in presentation order: the full-face baseline,
// four singles, the five pairs (LC+RC deliberately absent), four triples and
// the all-region combination.
inline std::vector<PatchConfig> enumerate_configs() {
  using R = Region;
  auto cfg = [](std::initializer_list<R> rs) {
    return PatchConfig::from_regions(std::set<R>(rs));
  };
  return {
      PatchConfig::make_full_face(),
      cfg({R::F}), cfg({R::N}), cfg({R::LC}), cfg({R::RC}),
      cfg({R::F, R::N}), cfg({R::F, R::LC}), cfg({R::F, R::RC}),
      cfg({R::N, R::LC}), cfg({R::N, R::RC}),
      cfg({R::F, R::N, R::LC}), cfg({R::F, R::N, R::RC}),
      cfg({R::F, R::LC, R::RC}), cfg({R::N, R::LC, R::RC}),
      cfg({R::F, R::N, R::LC, R::RC}),
  };
}

inline PatchConfig resolve_config_name(const std::string& name) {
  PatchConfig parsed = PatchConfig::parse(name);
  for (const auto& c : enumerate_configs())
    if (c == parsed) return c;
  throw ConfigError("'" + name + "' is not one of the 15 patch configurations");
}

// Per-region, per-scale rectangle table in the 150x130 canonical frame.
// Invariants checked by validate(): all 12 cells present (by construction),
// every rectangle inside the frame, and small within medium within large.
struct RoiSpec {
  std::map<std::pair<Region, Scale>, Rect> rects;

  const Rect& rect(Region r, Scale s) const { return rects.at({r, s}); }

  void validate() const {
    for (Region r : kAllRegions) {
      for (Scale s : kAllScales) {
        auto it = rects.find({r, s});
        if (it == rects.end())
          throw ConfigError(std::string("ROI spec missing cell (") + to_string(r) +
                            ", " + to_string(s) + ")");
        if (!it->second.within_frame(kCanonicalHeight, kCanonicalWidth))
          throw ConfigError(std::string("ROI rectangle (") + to_string(r) + ", " +
                            to_string(s) + ") falls outside the 150x130 frame");
      }
      if (!rect(r, Scale::medium).contains(rect(r, Scale::small)) ||
          !rect(r, Scale::large).contains(rect(r, Scale::medium)))
        throw ConfigError(std::string("ROI nesting violated for region ") + to_string(r) +
                          ": small must lie within medium within large");
    }
  }

  // Hand-tuned defaults for the canonical eye positions (37.5,60)/(92.5,60):
  // forehead band above the eye line, nose strip between the eye columns,
  // cheeks below the eye line flanking the nose. LC/RC are horizontal mirror
  // images. Documentation-level data, overridable via file.
  static RoiSpec builtin_default() {
    RoiSpec s;
    auto put = [&s](Region r, Rect lg, Rect md, Rect sm) {
      s.rects[{r, Scale::large}] = lg;
      s.rects[{r, Scale::medium}] = md;
      s.rects[{r, Scale::small}] = sm;
    };
    put(Region::F, {2, 20, 48, 90}, {8, 30, 36, 70}, {16, 40, 22, 50});
    put(Region::N, {56, 44, 54, 42}, {62, 50, 42, 30}, {70, 55, 28, 20});
    put(Region::LC, {70, 6, 54, 44}, {78, 12, 40, 34}, {84, 18, 28, 24});
    put(Region::RC, {70, 80, 54, 44}, {78, 84, 40, 34}, {84, 88, 28, 24});
    s.validate();
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "patchlab.roi.v1";
    j["frame"] = {{"height", kCanonicalHeight}, {"width", kCanonicalWidth}};
    nlohmann::ordered_json regions;
    for (Region r : kAllRegions) {
      nlohmann::ordered_json scales;
      for (Scale sc : kAllScales) {
        const Rect& rc = rect(r, sc);
        scales[to_string(sc)] = {{"top", rc.top}, {"left", rc.left},
                                 {"height", rc.height}, {"width", rc.width}};
      }
      regions[to_string(r)] = scales;
    }
    j["regions"] = regions;
    return j;
  }

  static RoiSpec from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j.at("schema") != "patchlab.roi.v1")
      throw ConfigError("ROI spec: unsupported or missing schema (want patchlab.roi.v1)");
    if (j.contains("frame")) {
      if (j.at("frame").value("height", -1) != kCanonicalHeight ||
          j.at("frame").value("width", -1) != kCanonicalWidth)
        throw ConfigError("ROI spec frame must be 150x130");
    }
    RoiSpec s;
    const auto& regions = j.at("regions");
    for (Region r : kAllRegions) {
      const std::string rn = to_string(r);
      if (!regions.contains(rn)) throw ConfigError("ROI spec missing region " + rn);
      for (Scale sc : kAllScales) {
        const std::string sn = to_string(sc);
        if (!regions.at(rn).contains(sn))
          throw ConfigError("ROI spec missing (" + rn + ", " + sn + ")");
        const auto& e = regions.at(rn).at(sn);
        s.rects[{r, sc}] = Rect{e.at("top").get<int>(), e.at("left").get<int>(),
                                e.at("height").get<int>(), e.at("width").get<int>()};
      }
    }
    s.validate();
    return s;
  }

  static RoiSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ROI spec " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("ROI spec " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write ROI spec " + path);
    out << to_json().dump(2) << "\n";
  }
};

// Binary pixel mask over the canonical frame, values 0 or 1.
struct Mask {
  int height = kCanonicalHeight;
  int width = kCanonicalWidth;
  std::vector<std::uint8_t> data;

  Mask() : data(static_cast<std::size_t>(kCanonicalHeight) * kCanonicalWidth, 0) {}
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  long sum() const {
    long s = 0;
    for (auto v : data) s += v;
    return s;
  }
  bool operator==(const Mask&) const = default;
};

// Union of the config's region rectangles at the given scale; FULL_FACE is
// the all-ones mask regardless of scale.
inline Mask build_mask(const RoiSpec& spec, const PatchConfig& config, Scale scale) {
  Mask m(kCanonicalHeight, kCanonicalWidth, config.full_face ? 1 : 0);
  if (config.full_face) return m;
  for (Region r : config.regions) {
    const Rect& rc = spec.rect(r, scale);
    for (int y = rc.top; y < rc.bottom(); ++y)
      for (int x = rc.left; x < rc.right(); ++x)
        m.at(y, x) = 1;
  }
  return m;
}

// Pixelwise img * mask in raw 8-bit space, mask broadcast over channels.
inline ImageU8 apply_mask(const ImageU8& img, const Mask& mask) {
  if (img.height != mask.height || img.width != mask.width)
    throw ContractError("apply_mask: image and mask shapes disagree");
  ImageU8 out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!mask.at(y, x)) {
        for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = 0;
      }
    }
  }
  return out;
}

}  // namespace patchlab
