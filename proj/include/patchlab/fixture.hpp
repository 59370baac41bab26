#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/dataset.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/roi.hpp"

namespace patchlab {

// Synthetic dataset with a class signal planted in chosen ROI rectangles:
// positives differ from negatives only inside those rectangles (a redness
// shift) plus i.i.d. pixel noise everywhere. Deterministic in (spec, seed),
// so desk-scale runs are reproducible byte for byte.
struct FixtureSpec {
  std::uint64_t seed = 7;

  long train_pos = 67, train_neg = 133;
  long val_pos = 20, val_neg = 40;
  long test_pos = 20, test_neg = 40;

  std::vector<Region> signal_regions = {Region::LC, Region::RC};
  Scale signal_scale = Scale::small;  // small nests inside medium and large
  RoiSpec roi = RoiSpec::builtin_default();

  double signal_amplitude = 35.0;  // +R, -G/B shift inside the signal rects
  double noise_sigma = 8.0;

  void validate() const {
    roi.validate();
    if (train_pos < 1 || train_neg < 1 || val_pos < 1 || val_neg < 1 ||
        test_pos < 1 || test_neg < 1)
      throw ConfigError("fixture: every (split, class) cell needs at least one image");
    if (noise_sigma < 0.0) throw ConfigError("fixture: noise_sigma must be >= 0");
    for (Region r : signal_regions) {
      const Rect& rect = roi.rect(r, signal_scale);
      if (!rect.within_frame(kCanonicalHeight, kCanonicalWidth))
        throw ConfigError("fixture: signal region outside the canonical frame");
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["train_pos"] = train_pos;
    j["train_neg"] = train_neg;
    j["val_pos"] = val_pos;
    j["val_neg"] = val_neg;
    j["test_pos"] = test_pos;
    j["test_neg"] = test_neg;
    auto regions = nlohmann::ordered_json::array();
    for (Region r : signal_regions) regions.push_back(to_string(r));
    j["signal_regions"] = regions;
    j["signal_scale"] = to_string(signal_scale);
    j["signal_amplitude"] = signal_amplitude;
    j["noise_sigma"] = noise_sigma;
    j["roi"] = roi.to_json();
    return j;
  }

  static FixtureSpec from_json(const nlohmann::json& j) {
    FixtureSpec s;
    s.seed = j.value("seed", s.seed);
    s.train_pos = j.value("train_pos", s.train_pos);
    s.train_neg = j.value("train_neg", s.train_neg);
    s.val_pos = j.value("val_pos", s.val_pos);
    s.val_neg = j.value("val_neg", s.val_neg);
    s.test_pos = j.value("test_pos", s.test_pos);
    s.test_neg = j.value("test_neg", s.test_neg);
    if (j.contains("signal_regions")) {
      s.signal_regions.clear();
      for (const auto& r : j.at("signal_regions"))
        s.signal_regions.push_back(region_from_string(r.get<std::string>()));
    }
    if (j.contains("signal_scale"))
      s.signal_scale = scale_from_string(j.at("signal_scale").get<std::string>());
    s.signal_amplitude = j.value("signal_amplitude", s.signal_amplitude);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    if (j.contains("roi")) s.roi = RoiSpec::from_json(j.at("roi"));
    s.validate();
    return s;
  }
};

namespace detail {

// Class-independent synthetic face: a skin-toned ellipse over a dark
// background with a mild vertical shading gradient.
inline std::array<double, 3> fixture_base_pixel(int y, int x) {
  double cy = kCanonicalHeight / 2.0, cx = kCanonicalWidth / 2.0;
  double dy = (y - cy) / (kCanonicalHeight * 0.52);
  double dx = (x - cx) / (kCanonicalWidth * 0.46);
  bool face = dy * dy + dx * dx <= 1.0;
  double shade = 1.0 - 0.15 * (static_cast<double>(y) / kCanonicalHeight);
  if (!face) return {40.0 * shade, 40.0 * shade, 44.0 * shade};
  return {182.0 * shade, 142.0 * shade, 120.0 * shade};
}

inline ImageU8 fixture_image(const FixtureSpec& spec, const Mask& signal_mask,
                             bool positive, std::uint64_t image_seed) {
  Rng rng(image_seed);
  ImageU8 img(kCanonicalHeight, kCanonicalWidth, 3);
  for (int y = 0; y < kCanonicalHeight; ++y) {
    for (int x = 0; x < kCanonicalWidth; ++x) {
      auto base = fixture_base_pixel(y, x);
      if (positive && signal_mask.at(y, x)) {
        base[0] += spec.signal_amplitude;
        base[1] -= 0.3 * spec.signal_amplitude;
        base[2] -= 0.3 * spec.signal_amplitude;
      }
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + rng.gaussian(0.0, spec.noise_sigma);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return img;
}

}  // namespace detail

// Writes the fixture tree under out_dir (split/class/image.png) and returns
// its manifest. Pure function of (spec, spec.seed): rerunning with the same
// inputs reproduces every byte.
inline DatasetManifest generate_fixture(const FixtureSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  spec.validate();

  Mask signal(kCanonicalHeight, kCanonicalWidth, 0);
  for (Region r : spec.signal_regions) {
    const Rect& rect = spec.roi.rect(r, spec.signal_scale);
    for (int y = rect.top; y < rect.bottom(); ++y)
      for (int x = rect.left; x < rect.right(); ++x) signal.at(y, x) = 1;
  }

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  auto emit = [&](Split split, int label, long count) {
    const char* class_name = label ? "positive" : "negative";
    for (long i = 0; i < count; ++i) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%s_%04ld", label ? "pos" : "neg",
                    to_string(split), i);
      std::string image_id = idbuf;
      // per-image stream keyed by id: insensitive to generation order
      Fnv1a h;
      h.feed(spec.seed);
      h.feed(image_id);
      ImageU8 img = detail::fixture_image(spec, signal, label == 1, h.value());
      fs::path rel = fs::path(to_string(split)) / class_name / (image_id + ".png");
      fs::path dst = fs::path(out_dir) / rel;
      fs::create_directories(dst.parent_path());
      write_png(img, dst.string());
      manifest.entries.push_back({image_id, rel.string(), label, split});
    }
  };
  emit(Split::train, 1, spec.train_pos);
  emit(Split::train, 0, spec.train_neg);
  emit(Split::val, 1, spec.val_pos);
  emit(Split::val, 0, spec.val_neg);
  emit(Split::test, 1, spec.test_pos);
  emit(Split::test, 0, spec.test_neg);
  manifest.validate(true);
  return manifest;
}

}  // namespace patchlab
