#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "patchlab/fixture.hpp"
#include "patchlab/grid.hpp"

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

// Shared tiny dataset + grid spec for the end-to-end grid tests.
struct GridHarness {
  TempDir data{"grid_data"};
  TempDir out{"grid_out"};
  std::string manifest_path;
  GridSpec spec;

  GridHarness() {
    FixtureSpec fspec;
    fspec.seed = 51;
    fspec.train_pos = 6;
    fspec.train_neg = 10;
    fspec.val_pos = 4;
    fspec.val_neg = 4;
    fspec.test_pos = 4;
    fspec.test_neg = 4;
    auto manifest = generate_fixture(fspec, data.str());
    manifest_path = (data.path / "manifest.json").string();
    manifest.save(manifest_path);

    spec.manifest_path = manifest_path;
    spec.out_root = out.str();
    spec.config_names = {"FULL_FACE", "LC", "N+LC"};
    spec.scales = {Scale::medium};
    spec.train.epochs = 1;
    spec.train.batch_size = 8;
    spec.train.lr = 0.01;
    spec.train.bn_momentum = 0.5;
    spec.train.input_height = 24;
    spec.train.input_width = 20;
    spec.train.seed = 5;
  }
};

}  // namespace

TEST_CASE("default grid has 43 cells: 14 configs x 3 scales + collapsed full face") {
  GridSpec spec;
  spec.manifest_path = "m.json";
  spec.out_root = "out";
  auto cells = grid_cells(spec);
  CHECK(cells.size() == 43);
  long full = 0;
  for (const auto& c : cells)
    if (c.config.full_face) ++full;
  CHECK(full == 1);
}

TEST_CASE("full-face alone collapses to one cell across all scales") {
  GridSpec spec;
  spec.manifest_path = "m.json";
  spec.out_root = "out";
  spec.config_names = {"FULL_FACE"};
  auto cells = grid_cells(spec);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].scale_label == "all");
  CHECK(!cells[0].scale.has_value());
}

TEST_CASE("grid cardinality formula holds for subsets") {
  GridSpec spec;
  spec.manifest_path = "m.json";
  spec.out_root = "out";
  spec.config_names = {"F", "N+LC", "FULL_FACE", "F+N+LC+RC"};
  spec.scales = {Scale::large, Scale::small};
  auto cells = grid_cells(spec);
  CHECK(cells.size() == 3 * 2 + 1);
}

TEST_CASE("cell seeds derive from (global seed, config, scale) and differ") {
  GridSpec spec;
  spec.manifest_path = "m.json";
  spec.out_root = "out";
  auto cells = grid_cells(spec);
  std::set<std::uint64_t> seeds;
  for (const auto& c : cells) seeds.insert(c.seed);
  CHECK(seeds.size() == cells.size());

  GridSpec other = spec;
  other.train.seed = 99;
  auto cells2 = grid_cells(other);
  CHECK(cells2[0].seed != cells[0].seed);
}

TEST_CASE("cell fingerprint reacts to every input that shapes the result") {
  GridSpec spec;
  spec.manifest_path = "m.json";
  spec.out_root = "out";
  RoiSpec roi = RoiSpec::builtin_default();
  auto cells = grid_cells(spec);
  const auto& cell = cells[1];
  std::string base = cell_fingerprint(spec, roi, cell, "mh");

  GridSpec t = spec;
  t.train.lr = 5e-4;
  CHECK(cell_fingerprint(t, roi, cell, "mh") != base);
  t = spec;
  t.train.epochs = 2;
  CHECK(cell_fingerprint(t, roi, cell, "mh") != base);
  t = spec;
  t.train.bn_momentum = 0.7;
  CHECK(cell_fingerprint(t, roi, cell, "mh") != base);

  RoiSpec roi2 = roi;
  roi2.rects[{Region::F, Scale::small}].top += 1;
  CHECK(cell_fingerprint(spec, roi2, cell, "mh") != base);

  CHECK(cell_fingerprint(spec, roi, cell, "other-manifest") != base);
  CHECK(cell_fingerprint(spec, roi, cells[2], "mh") != base);
}

TEST_CASE("rank_summary orders by metric with the documented tie-breaks") {
  GridSummary s;
  auto row = [](const std::string& cfg, const std::string& scale, double auc) {
    SummaryRow r;
    r.config_name = cfg;
    r.scale = scale;
    r.status = "ok";
    r.test_auc = auc;
    r.test_accuracy = auc;
    r.test_sensitivity = auc;
    return r;
  };
  s.rows = {row("F", "large", 0.88), row("F+N+LC", "large", 1.00),
            row("LC", "large", 0.95)};
  auto ranked = rank_summary(s, RankMetric::test_auc);
  CHECK(ranked[0].config_name == "F+N+LC");
  CHECK(ranked[1].config_name == "LC");
  CHECK(ranked[2].config_name == "F");

  // all equal: fewer regions first, then lexicographic name
  s.rows = {row("F+N+LC", "large", 0.9), row("N", "large", 0.9),
            row("FULL_FACE", "all", 0.9), row("F", "large", 0.9),
            row("N+LC", "large", 0.9)};
  ranked = rank_summary(s, RankMetric::test_accuracy);
  CHECK(ranked[0].config_name == "F");
  CHECK(ranked[1].config_name == "N");
  CHECK(ranked[2].config_name == "N+LC");
  CHECK(ranked[3].config_name == "F+N+LC");
  CHECK(ranked[4].config_name == "FULL_FACE");

  CHECK_THROWS_AS(rank_summary(GridSummary{}, RankMetric::test_auc), ContractError);
  CHECK_THROWS_AS(rank_metric_from_string("nope"), ConfigError);
  CHECK(rank_metric_from_string("test_sensitivity") == RankMetric::test_sensitivity);
}

TEST_CASE("rank_summary agrees with an independent reference sort") {
  Rng rng(71);
  GridSummary s;
  auto configs = enumerate_configs();
  for (int i = 0; i < 10; ++i) {
    SummaryRow r;
    r.config_name = configs[rng.below(15)].name;
    r.scale = "large";
    r.status = "ok";
    r.test_auc = (1 + rng.below(5)) / 5.0;  // force ties
    s.rows.push_back(r);
  }
  auto ranked = rank_summary(s, RankMetric::test_auc);

  // reference: selection sort with an independently written comparison
  auto regions_of = [](const std::string& name) -> std::size_t {
    if (name == "FULL_FACE") return 4;
    return static_cast<std::size_t>(std::count(name.begin(), name.end(), '+')) + 1;
  };
  auto ref = s.rows;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < ref.size(); ++j) {
      const auto &a = ref[j], &b = ref[best];
      bool better = false;
      if (a.test_auc != b.test_auc) {
        better = a.test_auc > b.test_auc;
      } else if (regions_of(a.config_name) != regions_of(b.config_name)) {
        better = regions_of(a.config_name) < regions_of(b.config_name);
      } else if (a.config_name != b.config_name) {
        better = a.config_name < b.config_name;
      }
      if (better) best = j;
    }
    std::swap(ref[i], ref[best]);
  }
  REQUIRE(ranked.size() == ref.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].config_name == ref[i].config_name);
    CHECK(ranked[i].test_auc == ref[i].test_auc);
  }
}

TEST_CASE("grid runs cells, persists artifacts, resumes and isolates failures") {
  GridHarness h;

  auto summary = run_grid(h.spec, /*resume=*/false);
  REQUIRE(summary.rows.size() == 3);
  for (const auto& r : summary.rows) {
    INFO(r.config_name, " ", r.error);
    CHECK(r.status == "ok");
    // artifact completeness: checkpoint and both reports exist and parse
    CHECK(fs::exists(r.checkpoint_path));
    fs::path cell_dir = fs::path(r.checkpoint_path).parent_path();
    auto val_report = EvalReport::load((cell_dir / "report_val.json").string());
    auto test_report = EvalReport::load((cell_dir / "report_test.json").string());
    CHECK(val_report.config_name == r.config_name);
    CHECK(test_report.auc == r.test_auc);
    auto wf = load_weights(r.checkpoint_path);
    CHECK(wf.meta.at("config_fingerprint") ==
          cell_fingerprint(h.spec, RoiSpec::builtin_default(),
                           grid_cells(h.spec)[&r - summary.rows.data()],
                           detail::hash_file_bytes(h.spec.manifest_path)));
    // grid checkpoints are self-describing: eval can rebuild preprocessing
    CHECK(wf.meta.at("config") == r.config_name);
    CHECK(wf.meta.at("scale") == r.scale);
    CHECK(wf.meta.contains("train"));
    CHECK(wf.meta.contains("roi"));
  }
  CHECK(fs::exists(h.out.path / "summary.json"));
  CHECK(fs::exists(h.out.path / "summary.csv"));
  CHECK(fs::exists(h.out.path / "LC" / "medium" / "history.csv"));
  CHECK(fs::exists(h.out.path / "FULL_FACE" / "all" / "report_test.json"));

  // loaded summary round-trips
  auto loaded = GridSummary::load((h.out.path / "summary.json").string());
  REQUIRE(loaded.rows.size() == 3);
  CHECK(loaded.rows[1].test_auc == summary.rows[1].test_auc);

  SUBCASE("resume skips complete cells entirely") {
    auto again = run_grid(h.spec, /*resume=*/true);
    for (const auto& r : again.rows) CHECK(r.status == "cached");
    for (std::size_t i = 0; i < again.rows.size(); ++i) {
      CHECK(again.rows[i].test_auc == summary.rows[i].test_auc);
      CHECK(again.rows[i].val_auc == summary.rows[i].val_auc);
    }
  }

  SUBCASE("resume recomputes only the deleted cell") {
    fs::remove_all(h.out.path / "LC" / "medium");
    auto again = run_grid(h.spec, /*resume=*/true);
    for (const auto& r : again.rows) {
      if (r.config_name == "LC") CHECK(r.status == "ok");
      else CHECK(r.status == "cached");
    }
  }

  SUBCASE("changing a train field invalidates every cached cell") {
    auto modified = h.spec;
    modified.train.lr = 0.02;
    auto again = run_grid(modified, /*resume=*/true);
    for (const auto& r : again.rows) CHECK(r.status == "ok");
  }

  SUBCASE("one failing cell is recorded; the rest still run") {
    TempDir out2("grid_fail_out");
    auto broken = h.spec;
    broken.out_root = out2.str();
    // occupy one cell's directory path with a regular file
    fs::create_directories(out2.path / "N+LC");
    std::ofstream(out2.path / "N+LC" / "medium") << "roadblock";
    auto result = run_grid(broken, /*resume=*/false);
    REQUIRE(result.rows.size() == 3);
    int ok = 0, failed = 0;
    for (const auto& r : result.rows) {
      if (r.ok()) ++ok;
      else ++failed;
    }
    CHECK(ok == 2);
    CHECK(failed == 1);
    CHECK(result.any_failed());
    CHECK(fs::exists(out2.path / "summary.json"));  // summary still written
    auto loaded2 = GridSummary::load((out2.path / "summary.json").string());
    bool saw_error = false;
    for (const auto& r : loaded2.rows)
      if (!r.ok() && !r.error.empty()) saw_error = true;
    CHECK(saw_error);
  }

  SUBCASE("two workers produce the same summary as one") {
    TempDir out3("grid_mt_out");
    auto mt = h.spec;
    mt.out_root = out3.str();
    auto result = run_grid(mt, /*resume=*/false, /*workers=*/2);
    REQUIRE(result.rows.size() == 3);
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      CHECK(result.rows[i].status == "ok");
      CHECK(result.rows[i].test_auc == summary.rows[i].test_auc);
      CHECK(result.rows[i].val_auc == summary.rows[i].val_auc);
    }
  }
}

TEST_CASE("grid spec json round-trips with relative path resolution") {
  TempDir tmp("grid_cfg");
  GridSpec spec;
  spec.manifest_path = "data/manifest.json";
  spec.out_root = "runs";
  spec.config_names = {"F", "FULL_FACE"};
  spec.scales = {Scale::large};
  spec.train.epochs = 2;
  auto path = tmp.path / "grid.json";
  {
    std::ofstream out(path);
    out << spec.to_json().dump(2);
  }
  auto loaded = GridSpec::load(path.string());
  CHECK(loaded.manifest_path == (tmp.path / "data/manifest.json").string());
  CHECK(loaded.out_root == (tmp.path / "runs").string());
  CHECK(loaded.train.epochs == 2);
  CHECK(loaded.config_names.size() == 2);

  // unknown config name rejected at validation
  auto bad = spec.to_json();
  bad["configs"].push_back("LC+RC");
  CHECK_THROWS_AS(GridSpec::from_json(bad), ConfigError);
}
