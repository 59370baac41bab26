#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "patchlab/dataset.hpp"
#include "patchlab/fixture.hpp"
#include "patchlab/rng.hpp"

using namespace patchlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("patchlab_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Raw face stand-in: flat color with two bright eye dots.
ImageU8 raw_face(int h, int w, Point le, Point re, std::uint8_t base) {
  ImageU8 img(h, w, 3);
  for (auto& v : img.data) v = base;
  auto dot = [&](Point p) {
    int y = static_cast<int>(p.y), x = static_cast<int>(p.x);
    for (int c = 0; c < 3; ++c) img.at(y, x, c) = 255;
  };
  dot(le);
  dot(re);
  return img;
}

void write_raw_tree(const fs::path& root, int n_pos, int n_neg) {
  std::ofstream eyes(root / "eyes.csv");
  eyes << "image_id,lx,ly,rx,ry\n";
  auto put = [&](const std::string& cls, const std::string& id, Split split) {
    fs::path dir = root / cls / to_string(split);
    fs::create_directories(dir);
    Point le{70, 80}, re{130, 80};
    write_png(raw_face(200, 200, le, re, cls == "positive" ? 180 : 120),
              (dir / (id + ".png")).string());
    eyes << id << ",70,80,130,80\n";
  };
  for (int i = 0; i < n_pos; ++i)
    put("positive", "pos" + std::to_string(i), i % 3 == 2 ? Split::val : Split::train);
  for (int i = 0; i < n_neg; ++i)
    put("negative", "neg" + std::to_string(i), i % 3 == 2 ? Split::val : Split::train);
}

}  // namespace

TEST_CASE("eye sidecar parses rows, header and comments") {
  TempDir tmp("sidecar");
  auto path = tmp.path / "eyes.csv";
  {
    std::ofstream out(path);
    out << "image_id,lx,ly,rx,ry\n";
    out << "# comment line\n";
    out << "a,10,20,60,21\n";
    out << "b,12.5,30.25,55,29\n";
  }
  auto rows = load_eye_sidecar(path.string());
  REQUIRE(rows.size() == 2);
  CHECK(rows.at("a").left_eye.x == 10);
  CHECK(rows.at("b").left_eye.y == 30.25);

  std::ofstream(path) << "bad,1,2\n";
  CHECK_THROWS_AS(load_eye_sidecar(path.string()), ConfigError);
}

TEST_CASE("ingest counts a small fixture tree: 6 positive, 12 negative") {
  TempDir raw("ingest_raw"), out("ingest_out");
  write_raw_tree(raw.path, 6, 12);
  auto result = ingest_dataset(raw.str(), out.str());
  CHECK(result.manifest.count_label(1) == 6);
  CHECK(result.manifest.count_label(0) == 12);
  CHECK(result.warnings.empty());
  // aligned outputs decode to the canonical shape
  auto loaded = load_aligned(result.manifest);
  REQUIRE(loaded.size() == 18);
  for (const auto& img : loaded) {
    CHECK(img.pixels.height == kCanonicalHeight);
    CHECK(img.pixels.width == kCanonicalWidth);
  }
}

TEST_CASE("ingest skips corrupt images and missing sidecar rows with warnings") {
  TempDir raw("ingest_bad"), out("ingest_bad_out");
  write_raw_tree(raw.path, 4, 4);
  // corrupt bytes, present on disk
  {
    std::ofstream bad(raw.path / "positive" / "train" / "broken.png", std::ios::binary);
    bad << "\x89PNG\r\n but garbage follows";
  }
  // image without a sidecar row
  write_png(raw_face(200, 200, {70, 80}, {130, 80}, 90),
            (raw.path / "negative" / "train" / "orphan.png").string());

  auto result = ingest_dataset(raw.str(), out.str());
  CHECK(result.manifest.count_label(1) == 4);
  CHECK(result.manifest.count_label(0) == 4);
  REQUIRE(result.warnings.size() == 2);
  bool saw_corrupt = false, saw_orphan = false;
  for (const auto& w : result.warnings) {
    if (w.find("broken") != std::string::npos) saw_corrupt = true;
    if (w.find("orphan") != std::string::npos) saw_orphan = true;
  }
  CHECK(saw_corrupt);
  CHECK(saw_orphan);
}

TEST_CASE("ingest fails hard on an empty class") {
  TempDir raw("ingest_empty"), out("ingest_empty_out");
  write_raw_tree(raw.path, 3, 0);
  fs::create_directories(raw.path / "negative" / "train");
  CHECK_THROWS_AS(ingest_dataset(raw.str(), out.str()), ConfigError);
}

TEST_CASE("manifest json round-trips, rejects duplicates and count drift") {
  DatasetManifest m;
  m.entries = {{"a", "train/positive/a.png", 1, Split::train},
               {"b", "train/negative/b.png", 0, Split::train},
               {"c", "val/positive/c.png", 1, Split::val}};
  auto j = m.to_json();
  auto back = DatasetManifest::from_json(j, "");
  CHECK(back.entries.size() == 3);
  CHECK(back.count(Split::train, 1) == 1);
  CHECK(back.count(Split::val, 1) == 1);

  auto dup = j;
  dup["entries"].push_back(dup["entries"][0]);
  CHECK_THROWS_AS(DatasetManifest::from_json(dup, ""), ConfigError);

  auto drift = j;
  drift["counts"]["train"]["pos"] = 9;
  CHECK_THROWS_AS(DatasetManifest::from_json(drift, ""), ConfigError);
}

TEST_CASE("manifest save insists every file exists") {
  TempDir tmp("manifest_save");
  DatasetManifest m;
  m.entries = {{"ghost", "nowhere.png", 1, Split::train}};
  CHECK_THROWS_AS(m.save((tmp.path / "manifest.json").string()), IoError);
}

TEST_CASE("paper-shaped tree counts: 250/50 train/val positive, 500/100 negative") {
  // Generated with the fixture plumbing; the point is the manifest tallies.
  TempDir out("paper_shape");
  FixtureSpec spec;
  spec.seed = 1;
  spec.train_pos = 250;
  spec.val_pos = 50;
  spec.train_neg = 500;
  spec.val_neg = 100;
  spec.test_pos = 1;
  spec.test_neg = 1;
  auto manifest = generate_fixture(spec, out.str());
  CHECK(manifest.count(Split::train, 1) == 250);
  CHECK(manifest.count(Split::val, 1) == 50);
  CHECK(manifest.count(Split::train, 0) == 500);
  CHECK(manifest.count(Split::val, 0) == 100);
  CHECK(manifest.count_label(1) == 301);
  CHECK(manifest.count_label(0) == 601);
}

TEST_CASE("fixture generation is deterministic in (spec, seed)") {
  TempDir a("fix_a"), b("fix_b");
  FixtureSpec spec;
  spec.seed = 7;
  spec.train_pos = 3;
  spec.train_neg = 3;
  spec.val_pos = 1;
  spec.val_neg = 1;
  spec.test_pos = 1;
  spec.test_neg = 1;
  auto ma = generate_fixture(spec, a.str());
  auto mb = generate_fixture(spec, b.str());
  REQUIRE(ma.entries.size() == mb.entries.size());
  for (std::size_t i = 0; i < ma.entries.size(); ++i) {
    std::ifstream fa(ma.resolve(ma.entries[i]), std::ios::binary);
    std::ifstream fb(mb.resolve(mb.entries[i]), std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
  }

  FixtureSpec other = spec;
  other.seed = 8;
  TempDir c("fix_c");
  auto mc = generate_fixture(other, c.str());
  std::ifstream fa(ma.resolve(ma.entries[0]), std::ios::binary);
  std::ifstream fc(mc.resolve(mc.entries[0]), std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string bc((std::istreambuf_iterator<char>(fc)), std::istreambuf_iterator<char>());
  CHECK(ba != bc);
}

TEST_CASE("fixture signal lives only inside the designated rectangles") {
  TempDir out("fix_signal");
  FixtureSpec spec;
  spec.seed = 11;
  spec.train_pos = 100;
  spec.train_neg = 100;
  spec.val_pos = 1;
  spec.val_neg = 1;
  spec.test_pos = 1;
  spec.test_neg = 1;
  auto manifest = generate_fixture(spec, out.str());
  auto images = load_aligned(manifest, Split::train);

  // per-pixel mean difference (pos - neg) on the red channel
  std::vector<double> diff(static_cast<std::size_t>(kCanonicalHeight) * kCanonicalWidth, 0.0);
  long n_pos = 0, n_neg = 0;
  for (const auto& img : images) (img.label ? n_pos : n_neg)++;
  for (const auto& img : images) {
    double w = img.label ? 1.0 / n_pos : -1.0 / n_neg;
    for (int y = 0; y < kCanonicalHeight; ++y)
      for (int x = 0; x < kCanonicalWidth; ++x)
        diff[static_cast<std::size_t>(y) * kCanonicalWidth + x] += w * img.pixels.at(y, x, 0);
  }

  Mask signal(kCanonicalHeight, kCanonicalWidth, 0);
  for (Region r : spec.signal_regions) {
    const Rect& rect = spec.roi.rect(r, spec.signal_scale);
    for (int y = rect.top; y < rect.bottom(); ++y)
      for (int x = rect.left; x < rect.right(); ++x) signal.at(y, x) = 1;
  }

  // noise floor: se of a mean difference of two 100-image averages,
  // sigma 8 -> se ~ 1.13; allow 6 se outside, demand > 20 inside
  double max_outside = 0.0, min_inside = 1e9;
  for (int y = 0; y < kCanonicalHeight; ++y) {
    for (int x = 0; x < kCanonicalWidth; ++x) {
      double d = diff[static_cast<std::size_t>(y) * kCanonicalWidth + x];
      if (signal.at(y, x)) min_inside = std::min(min_inside, d);
      else max_outside = std::max(max_outside, std::fabs(d));
    }
  }
  CHECK(max_outside < 6.0 * 8.0 * std::sqrt(2.0 / 100.0));
  CHECK(min_inside > 20.0);
}

TEST_CASE("zero-amplitude fixture: class means agree within sampling noise") {
  TempDir out("fix_null");
  FixtureSpec spec;
  spec.seed = 13;
  spec.signal_amplitude = 0.0;
  spec.train_pos = 50;
  spec.train_neg = 50;
  spec.val_pos = 1;
  spec.val_neg = 1;
  spec.test_pos = 1;
  spec.test_neg = 1;
  auto manifest = generate_fixture(spec, out.str());
  auto images = load_aligned(manifest, Split::train);
  double mean_pos = 0.0, mean_neg = 0.0;
  long n_pos = 0, n_neg = 0;
  for (const auto& img : images) {
    double s = 0.0;
    for (auto v : img.pixels.data) s += v;
    s /= static_cast<double>(img.pixels.data.size());
    if (img.label) {
      mean_pos += s;
      ++n_pos;
    } else {
      mean_neg += s;
      ++n_neg;
    }
  }
  mean_pos /= n_pos;
  mean_neg /= n_neg;
  // se of the difference of two 50-image global means is tiny; 3 sigma with
  // a safety factor for clamping effects
  double se = 8.0 * std::sqrt(2.0 / (50.0 * 19500.0 * 3.0));
  CHECK(std::fabs(mean_pos - mean_neg) <= 5.0 * se + 0.05);
}

TEST_CASE("fixture rejects out-of-frame signal rectangles") {
  FixtureSpec spec;
  spec.roi.rects[{Region::LC, Scale::small}] = Rect{140, 120, 30, 30};  // spills out
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
