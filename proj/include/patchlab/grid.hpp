#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "patchlab/dataset.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/plot.hpp"
#include "patchlab/roi.hpp"
#include "patchlab/train.hpp"

namespace patchlab {

// The whole experiment grid in one record: which dataset, which ROI table,
// which (configuration, scale) cells, and the shared training recipe.
struct GridSpec {
  std::string manifest_path;
  std::string roi_spec_path;  // empty = builtin default table
  std::string out_root;
  std::vector<std::string> config_names;  // empty = all 15
  std::vector<Scale> scales = {Scale::large, Scale::medium, Scale::small};
  TrainConfig train;

  void validate() const {
    if (manifest_path.empty()) throw ConfigError("grid: manifest path required");
    if (out_root.empty()) throw ConfigError("grid: out_root required");
    if (scales.empty()) throw ConfigError("grid: at least one scale");
    train.validate();
    std::set<std::string> names;
    for (const auto& name : config_names)
      if (!names.insert(resolve_config_name(name).name).second)
        throw ConfigError("grid: duplicate config '" + name + "'");
    std::set<Scale> uniq(scales.begin(), scales.end());
    if (uniq.size() != scales.size()) throw ConfigError("grid: duplicate scale entry");
  }

  RoiSpec load_roi() const {
    return roi_spec_path.empty() ? RoiSpec::builtin_default() : RoiSpec::load(roi_spec_path);
  }

  std::vector<PatchConfig> resolved_configs() const {
    if (config_names.empty()) return enumerate_configs();
    std::vector<PatchConfig> out;
    for (const auto& name : config_names) out.push_back(resolve_config_name(name));
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "patchlab.grid.v1";
    j["manifest"] = manifest_path;
    j["roi_spec"] = roi_spec_path;
    j["out_root"] = out_root;
    auto cn = nlohmann::ordered_json::array();
    for (const auto& n : config_names) cn.push_back(n);
    j["configs"] = cn;
    auto sc = nlohmann::ordered_json::array();
    for (Scale s : scales) sc.push_back(to_string(s));
    j["scales"] = sc;
    j["train"] = train.to_json();
    return j;
  }

  static GridSpec from_json(const nlohmann::json& j, const std::string& base_dir = "") {
    if (!j.contains("schema") || j.at("schema") != "patchlab.grid.v1")
      throw ConfigError("grid config: unsupported or missing schema");
    GridSpec s;
    auto resolve = [&base_dir](std::string p) {
      if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute())
        return p;
      return (std::filesystem::path(base_dir) / p).string();
    };
    s.manifest_path = resolve(j.at("manifest").get<std::string>());
    s.roi_spec_path = resolve(j.value("roi_spec", ""));
    s.out_root = resolve(j.at("out_root").get<std::string>());
    if (j.contains("configs"))
      for (const auto& c : j.at("configs")) s.config_names.push_back(c.get<std::string>());
    if (j.contains("scales")) {
      s.scales.clear();
      for (const auto& sc : j.at("scales"))
        s.scales.push_back(scale_from_string(sc.get<std::string>()));
    }
    if (j.contains("train")) s.train = TrainConfig::from_json(j.at("train"));
    s.validate();
    return s;
  }

  static GridSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("grid config " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path().string());
  }
};

// One (configuration, scale) unit. FULL_FACE is scale-independent and
// collapses to a single cell labeled "all".
struct GridCell {
  PatchConfig config;
  std::string scale_label;           // "large"/"medium"/"small"/"all"
  std::optional<Scale> scale;        // nullopt for FULL_FACE
  std::uint64_t seed = 0;
};

inline std::vector<GridCell> grid_cells(const GridSpec& spec) {
  std::vector<GridCell> cells;
  for (const auto& config : spec.resolved_configs()) {
    auto add = [&](const std::string& label, std::optional<Scale> sc) {
      Fnv1a h;
      h.feed(spec.train.seed);
      h.feed(config.name);
      h.feed(label);
      cells.push_back({config, label, sc, h.value()});
    };
    if (config.full_face) {
      add("all", std::nullopt);
    } else {
      for (Scale sc : spec.scales) add(to_string(sc), sc);
    }
  }
  return cells;
}

struct SummaryRow {
  std::string config_name;
  std::string scale;
  std::string status;  // "ok", "cached" or "failed"
  std::string error;
  double val_auc = 0.0;
  double test_auc = 0.0;
  double test_accuracy = 0.0;
  double test_sensitivity = 0.0;
  std::string checkpoint_path;

  bool ok() const { return status == "ok" || status == "cached"; }
};

struct GridSummary {
  std::vector<SummaryRow> rows;

  bool any_failed() const {
    for (const auto& r : rows)
      if (!r.ok()) return true;
    return false;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "patchlab.summary.v1";
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json e;
      e["config"] = r.config_name;
      e["scale"] = r.scale;
      e["status"] = r.status;
      if (!r.ok()) {
        e["error"] = r.error;
      } else {
        e["val_auc"] = r.val_auc;
        e["test_auc"] = r.test_auc;
        e["test_accuracy"] = r.test_accuracy;
        e["test_sensitivity"] = r.test_sensitivity;
        e["checkpoint"] = r.checkpoint_path;
      }
      arr.push_back(e);
    }
    j["rows"] = arr;
    return j;
  }

  static GridSummary from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j.at("schema") != "patchlab.summary.v1")
      throw ConfigError("summary: unsupported or missing schema");
    GridSummary s;
    for (const auto& e : j.at("rows")) {
      SummaryRow r;
      r.config_name = e.at("config").get<std::string>();
      r.scale = e.at("scale").get<std::string>();
      r.status = e.at("status").get<std::string>();
      if (r.ok()) {
        r.val_auc = e.at("val_auc").get<double>();
        r.test_auc = e.at("test_auc").get<double>();
        r.test_accuracy = e.at("test_accuracy").get<double>();
        r.test_sensitivity = e.at("test_sensitivity").get<double>();
        r.checkpoint_path = e.at("checkpoint").get<std::string>();
      } else {
        r.error = e.value("error", "");
      }
      s.rows.push_back(std::move(r));
    }
    return s;
  }

  void save(const std::string& out_root) const {
    std::ofstream js(std::filesystem::path(out_root) / "summary.json");
    if (!js) throw IoError("cannot write summary.json under " + out_root);
    js << to_json().dump(2) << "\n";
    std::ofstream csv(std::filesystem::path(out_root) / "summary.csv");
    if (!csv) throw IoError("cannot write summary.csv under " + out_root);
    csv << "config,scale,status,val_auc,test_auc,test_accuracy,test_sensitivity,checkpoint\n";
    for (const auto& r : rows) {
      csv << r.config_name << "," << r.scale << "," << r.status << ",";
      if (r.ok())
        csv << fmt_double(r.val_auc) << "," << fmt_double(r.test_auc) << ","
            << fmt_double(r.test_accuracy) << "," << fmt_double(r.test_sensitivity) << ","
            << r.checkpoint_path;
      else
        csv << ",,,,";
      csv << "\n";
    }
  }

  static GridSummary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open summary " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

namespace detail {

inline std::string hash_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Fnv1a h;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.feed(buf, static_cast<std::size_t>(in.gcount()));
  return to_hex(h.value());
}

}  // namespace detail

// Everything that determines a cell's result: the training recipe with the
// cell's derived seed, the cell identity, the ROI table and the dataset.
inline std::string cell_fingerprint(const GridSpec& spec, const RoiSpec& roi,
                                    const GridCell& cell,
                                    const std::string& manifest_hash) {
  TrainConfig cell_cfg = spec.train;
  cell_cfg.seed = cell.seed;
  Fnv1a h;
  cell_cfg.feed_fingerprint(h);
  h.feed(cell.config.name);
  h.feed(cell.scale_label);
  h.feed(roi.to_json().dump());
  h.feed(manifest_hash);
  return to_hex(h.value());
}

struct GridDataset {
  std::vector<AlignedImage> train, val, test;
};

inline GridDataset load_grid_dataset(const DatasetManifest& manifest) {
  GridDataset d;
  d.train = load_aligned(manifest, Split::train);
  d.val = load_aligned(manifest, Split::val);
  d.test = load_aligned(manifest, Split::test);
  if (d.train.empty() || d.val.empty() || d.test.empty())
    throw ConfigError("grid: manifest must provide nonempty train, val and test splits");
  return d;
}

namespace detail {

inline bool cell_complete(const std::filesystem::path& dir, const std::string& fingerprint) {
  namespace fs = std::filesystem;
  fs::path marker = dir / "cell.json";
  if (!fs::exists(marker)) return false;
  try {
    std::ifstream in(marker);
    nlohmann::json j;
    in >> j;
    if (j.value("schema", "") != "patchlab.cell.v1") return false;
    if (j.value("fingerprint", "") != fingerprint) return false;
    if (j.value("status", "") != "ok") return false;
    for (const char* f : {"checkpoint.bin", "history.csv", "report_val.json",
                          "report_test.json", "scores_val.csv", "scores_test.csv"})
      if (!fs::exists(dir / f)) return false;
    EvalReport::load((dir / "report_val.json").string());
    EvalReport::load((dir / "report_test.json").string());
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

inline SummaryRow run_cell(const GridSpec& spec, const RoiSpec& roi, const GridCell& cell,
                           const GridDataset& data, const std::string& fingerprint,
                           bool resume) {
  namespace fs = std::filesystem;
  SummaryRow row;
  row.config_name = cell.config.name;
  row.scale = cell.scale_label;
  fs::path dir = fs::path(spec.out_root) / cell.config.name / cell.scale_label;

  try {
    if (resume && cell_complete(dir, fingerprint)) {
      auto val_report = EvalReport::load((dir / "report_val.json").string());
      auto test_report = EvalReport::load((dir / "report_test.json").string());
      row.status = "cached";
      row.val_auc = val_report.auc;
      row.test_auc = test_report.auc;
      row.test_accuracy = test_report.at_half.accuracy;
      row.test_sensitivity = test_report.at_half.sensitivity;
      row.checkpoint_path = (dir / "checkpoint.bin").string();
      return row;
    }

    fs::create_directories(dir);
    fs::remove(dir / "cell.json");  // invalidate any stale completion marker

    TrainConfig cfg = spec.train;
    cfg.seed = cell.seed;
    Mask mask = cell.config.full_face
                    ? Mask(kCanonicalHeight, kCanonicalWidth, 1)
                    : build_mask(roi, cell.config, *cell.scale);
    auto train_set = preprocess(data.train, mask, cfg);
    auto val_set = preprocess(data.val, mask, cfg);
    auto test_set = preprocess(data.test, mask, cfg);

    auto model = build_model({cfg.pretrained, cfg.weights_path, cell.seed});
    auto outcome = train_model(model, train_set, val_set, cfg, fingerprint);

    save_history(outcome.history, (dir / "history.csv").string());
    stamp_checkpoint_meta(outcome.best_weights, cell.config, cell.scale_label, cfg, roi);
    save_weights(outcome.best_weights, (dir / "checkpoint.bin").string());

    auto val_scored = score_examples(model, val_set, cfg.batch_size);
    auto test_scored = score_examples(model, test_set, cfg.batch_size);
    save_scores(val_scored, (dir / "scores_val.csv").string());
    save_scores(test_scored, (dir / "scores_test.csv").string());

    auto val_report = EvalReport::from_scores(cell.config.name, cell.scale_label, "val", val_scored);
    auto test_report = EvalReport::from_scores(cell.config.name, cell.scale_label, "test", test_scored);
    val_report.save((dir / "report_val.json").string());
    test_report.save((dir / "report_test.json").string());

    // completion marker last: a crash mid-cell leaves the cell incomplete
    nlohmann::ordered_json marker;
    marker["schema"] = "patchlab.cell.v1";
    marker["fingerprint"] = fingerprint;
    marker["status"] = "ok";
    marker["best_epoch"] = outcome.best_epoch;
    marker["val_accuracy"] = outcome.best_val_accuracy;
    std::ofstream mout(dir / "cell.json");
    if (!mout) throw IoError("cannot write cell marker under " + dir.string());
    mout << marker.dump(2) << "\n";

    row.status = "ok";
    row.val_auc = val_report.auc;
    row.test_auc = test_report.auc;
    row.test_accuracy = test_report.at_half.accuracy;
    row.test_sensitivity = test_report.at_half.sensitivity;
    row.checkpoint_path = (dir / "checkpoint.bin").string();
  } catch (const std::exception& e) {
    row.status = "failed";
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

// Runs every cell, isolating failures: a failed cell is recorded in the
// summary and the remaining cells still execute. With resume=true, cells
// whose completion marker matches the fingerprint are skipped. Cells are
// independent; `workers` of them run concurrently.
inline GridSummary run_grid(const GridSpec& spec, bool resume = false, int workers = 1) {
  spec.validate();
  RoiSpec roi = spec.load_roi();
  auto manifest = DatasetManifest::load(spec.manifest_path);
  GridDataset data = load_grid_dataset(manifest);
  std::string manifest_hash = detail::hash_file_bytes(spec.manifest_path);

  std::filesystem::create_directories(spec.out_root);
  auto cells = grid_cells(spec);

  GridSummary summary;
  summary.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      std::string fp = cell_fingerprint(spec, roi, cells[i], manifest_hash);
      summary.rows[i] = detail::run_cell(spec, roi, cells[i], data, fp, resume);
    }
  };
  int n_workers = std::max(1, workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  summary.save(spec.out_root);
  return summary;
}

enum class RankMetric { test_auc, test_sensitivity, test_accuracy };

inline RankMetric rank_metric_from_string(const std::string& s) {
  if (s == "test_auc") return RankMetric::test_auc;
  if (s == "test_sensitivity") return RankMetric::test_sensitivity;
  if (s == "test_accuracy") return RankMetric::test_accuracy;
  throw ConfigError("unknown rank metric '" + s + "'");
}

// Descending by the metric; ties break toward fewer regions, then by name.
// Failed rows sink to the bottom. FULL_FACE counts as all four regions.
inline std::vector<SummaryRow> rank_summary(const GridSummary& summary, RankMetric metric) {
  if (summary.rows.empty()) throw ContractError("rank_summary: empty summary");
  auto metric_of = [metric](const SummaryRow& r) {
    switch (metric) {
      case RankMetric::test_auc: return r.test_auc;
      case RankMetric::test_sensitivity: return r.test_sensitivity;
      case RankMetric::test_accuracy: return r.test_accuracy;
    }
    return 0.0;
  };
  auto region_count = [](const SummaryRow& r) {
    auto cfg = resolve_config_name(r.config_name);
    return cfg.full_face ? std::size_t(4) : cfg.regions.size();
  };
  std::vector<SummaryRow> out = summary.rows;
  std::stable_sort(out.begin(), out.end(), [&](const SummaryRow& a, const SummaryRow& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;
    if (metric_of(a) != metric_of(b)) return metric_of(a) > metric_of(b);
    if (region_count(a) != region_count(b)) return region_count(a) < region_count(b);
    if (a.config_name != b.config_name) return a.config_name < b.config_name;
    return a.scale < b.scale;
  });
  return out;
}

}  // namespace patchlab
