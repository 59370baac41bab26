// patchlab: patch-based face classification toolkit.
//
// Subcommands cover the full pipeline: ingest raw faces into the canonical
// frame, generate synthetic fixtures, export masked patches, train a single
// (configuration, scale) cell, evaluate a checkpoint, run the whole grid,
// and render ROC figures from a grid summary.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "patchlab/dataset.hpp"
#include "patchlab/fixture.hpp"
#include "patchlab/grid.hpp"
#include "patchlab/plot.hpp"
#include "patchlab/train.hpp"

namespace fs = std::filesystem;
using namespace patchlab;

namespace {

CanonicalEyes parse_canon(const std::string& text) {
  auto parts = split(text, ',');
  if (parts.size() != 4)
    throw ConfigError("--canon wants \"lx,ly,rx,ry\", got '" + text + "'");
  CanonicalEyes canon;
  canon.left = {std::stod(parts[0]), std::stod(parts[1])};
  canon.right = {std::stod(parts[2]), std::stod(parts[3])};
  canon.validate();
  return canon;
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--batch", cfg.batch_size, "mini-batch size");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--lr", cfg.lr, "initial learning rate");
  cmd->add_option("--momentum", cfg.momentum, "SGD momentum");
  cmd->add_option("--step-size", cfg.step_size, "epochs per LR decay step");
  cmd->add_option("--gamma", cfg.gamma, "LR decay factor");
  cmd->add_option("--bn-momentum", cfg.bn_momentum, "batch-norm running-stat momentum");
  cmd->add_option("--input-height", cfg.input_height, "backbone input height");
  cmd->add_option("--input-width", cfg.input_width, "backbone input width");
  cmd->add_flag("--pretrained", cfg.pretrained, "load backbone weights from --weights");
  cmd->add_option("--weights", cfg.weights_path, "weights file for --pretrained");
}

RoiSpec load_roi_arg(const std::string& path) {
  return path.empty() ? RoiSpec::builtin_default() : RoiSpec::load(path);
}

int cmd_ingest(const std::string& root, const std::string& out, const std::string& canon_text) {
  auto canon = parse_canon(canon_text);
  auto result = ingest_dataset(root, out, canon);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  auto manifest_path = (fs::path(out) / "manifest.json").string();
  result.manifest.save(manifest_path);
  std::cout << "ingested " << result.manifest.entries.size() << " images ("
            << result.manifest.count_label(1) << " positive, "
            << result.manifest.count_label(0) << " negative) -> " << manifest_path << "\n";
  return 0;
}

int cmd_fixture(const std::string& spec_path, const std::string& out, std::uint64_t seed,
                bool seed_given) {
  FixtureSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw IoError("cannot open fixture spec " + spec_path);
    nlohmann::json j;
    in >> j;
    spec = FixtureSpec::from_json(j);
  }
  if (seed_given) spec.seed = seed;
  auto manifest = generate_fixture(spec, out);
  auto manifest_path = (fs::path(out) / "manifest.json").string();
  manifest.save(manifest_path);
  std::ofstream((fs::path(out) / "fixture.json")) << spec.to_json().dump(2) << "\n";
  std::cout << "fixture: " << manifest.entries.size() << " images -> " << manifest_path << "\n";
  return 0;
}

int cmd_mask(const std::string& roi_path, const std::string& config_name,
             const std::string& scale_name, const std::string& in_dir,
             const std::string& out_dir) {
  RoiSpec roi = load_roi_arg(roi_path);
  PatchConfig config = resolve_config_name(config_name);
  Mask mask = config.full_face ? Mask(kCanonicalHeight, kCanonicalWidth, 1)
                               : build_mask(roi, config, scale_from_string(scale_name));
  if (!fs::is_directory(in_dir)) throw IoError("--in is not a directory: " + in_dir);
  long done = 0;
  for (const auto& de : fs::recursive_directory_iterator(in_dir)) {
    if (!de.is_regular_file()) continue;
    auto ext = de.path().extension().string();
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".ppm" && ext != ".pgm")
      continue;
    ImageU8 img = read_image(de.path().string());
    if (img.height != kCanonicalHeight || img.width != kCanonicalWidth) {
      std::cerr << "warning: " << de.path().string() << " is not 150x130, skipped\n";
      continue;
    }
    fs::path rel = fs::relative(de.path(), in_dir).replace_extension(".png");
    fs::path dst = fs::path(out_dir) / rel;
    fs::create_directories(dst.parent_path());
    write_png(apply_mask(img, mask), dst.string());
    ++done;
  }
  if (done == 0) throw ConfigError("mask: no 150x130 raster files under " + in_dir);
  std::cout << "masked " << done << " images with " << config.name << " ["
            << (config.full_face ? "all" : scale_name) << "] -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& roi_path,
              const std::string& config_name, const std::string& scale_name,
              const std::string& out_dir, TrainConfig cfg) {
  cfg.validate();
  RoiSpec roi = load_roi_arg(roi_path);
  PatchConfig config = resolve_config_name(config_name);
  std::string scale_label = config.full_face ? "all" : scale_name;
  Mask mask = config.full_face ? Mask(kCanonicalHeight, kCanonicalWidth, 1)
                               : build_mask(roi, config, scale_from_string(scale_name));

  auto manifest = DatasetManifest::load(manifest_path);
  auto train_imgs = load_aligned(manifest, Split::train);
  auto val_imgs = load_aligned(manifest, Split::val);
  if (train_imgs.empty() || val_imgs.empty())
    throw ConfigError("train: manifest needs nonempty train and val splits");
  auto train_set = preprocess(train_imgs, mask, cfg);
  auto val_set = preprocess(val_imgs, mask, cfg);

  auto model = build_model({cfg.pretrained, cfg.weights_path, cfg.seed});
  auto outcome = train_model(model, train_set, val_set, cfg, cfg.fingerprint());

  fs::create_directories(out_dir);
  save_history(outcome.history, (fs::path(out_dir) / "history.csv").string());
  stamp_checkpoint_meta(outcome.best_weights, config, scale_label, cfg, roi);
  auto ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
  save_weights(outcome.best_weights, ckpt);
  std::cout << "best epoch " << outcome.best_epoch << ", val accuracy "
            << fmt_double(outcome.best_val_accuracy) << " -> " << ckpt << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split_name, const std::string& out_dir) {
  auto wf = load_weights(checkpoint_path);
  if (!wf.meta.contains("config") || !wf.meta.contains("train") || !wf.meta.contains("roi"))
    throw ConfigError("checkpoint lacks preprocessing metadata; re-train with this toolkit");
  PatchConfig config = resolve_config_name(wf.meta.at("config").get<std::string>());
  std::string scale_label = wf.meta.at("scale").get<std::string>();
  TrainConfig cfg = TrainConfig::from_json(wf.meta.at("train"));
  RoiSpec roi = RoiSpec::from_json(wf.meta.at("roi"));
  Mask mask = config.full_face ? Mask(kCanonicalHeight, kCanonicalWidth, 1)
                               : build_mask(roi, config, scale_from_string(scale_label));

  Split split = split_from_string(split_name);
  auto manifest = DatasetManifest::load(manifest_path);
  auto images = load_aligned(manifest, split);
  if (images.empty()) throw ConfigError("eval: split '" + split_name + "' is empty");
  auto set = preprocess(images, mask, cfg);

  auto model = build_model({});
  restore_model(model, wf);
  auto scored = score_examples(model, set, cfg.batch_size);

  fs::create_directories(out_dir);
  auto scores_path = (fs::path(out_dir) / ("scores_" + split_name + ".csv")).string();
  save_scores(scored, scores_path);
  auto report = EvalReport::from_scores(config.name, scale_label, split_name, scored);
  auto plot_path = (fs::path(out_dir) / ("roc_" + split_name + ".svg")).string();
  report.plot_path = emit_roc_plot({report}, plot_path);
  report.save((fs::path(out_dir) / ("report_" + split_name + ".json")).string());
  std::cout << config.name << " [" << scale_label << "] " << split_name
            << ": auc " << fmt_double(report.auc) << ", accuracy "
            << fmt_double(report.at_half.accuracy) << ", sensitivity "
            << fmt_double(report.at_half.sensitivity) << "\n";
  return 0;
}

int cmd_grid(const std::string& config_path, bool resume, int workers) {
  auto spec = GridSpec::load(config_path);
  auto summary = run_grid(spec, resume, workers);
  long ok = 0, failed = 0;
  for (const auto& r : summary.rows) (r.ok() ? ok : failed)++;
  std::cout << "grid: " << ok << " ok, " << failed << " failed, summary under "
            << spec.out_root << "\n";
  for (const auto& r : summary.rows)
    if (!r.ok())
      std::cerr << "failed cell " << r.config_name << " [" << r.scale << "]: " << r.error << "\n";
  return summary.any_failed() ? 2 : 0;
}

int cmd_report(const std::string& summary_path, const std::string& plot_dir) {
  auto summary = GridSummary::load(summary_path);
  fs::create_directories(plot_dir);
  long figures = 0;
  for (const std::string split : {"val", "test"}) {
    for (const std::string scale : {"large", "medium", "small"}) {
      std::vector<EvalReport> panel;
      for (const auto& row : summary.rows) {
        if (!row.ok()) continue;
        if (row.scale != scale && row.scale != "all") continue;
        fs::path cell_dir = fs::path(row.checkpoint_path).parent_path();
        fs::path report_path = cell_dir / ("report_" + split + ".json");
        if (!fs::exists(report_path)) continue;
        panel.push_back(EvalReport::load(report_path.string()));
      }
      if (panel.empty()) continue;
      auto out = (fs::path(plot_dir) / ("roc_" + split + "_" + scale + ".svg")).string();
      emit_roc_plot(panel, out);
      ++figures;
    }
  }
  if (figures == 0) throw ConfigError("report: no per-cell reports found next to checkpoints");
  std::cout << "wrote " << figures << " ROC figures -> " << plot_dir << "\n";
  return 0;
}

int cmd_rank(const std::string& summary_path, const std::string& metric) {
  auto summary = GridSummary::load(summary_path);
  auto ranked = rank_summary(summary, rank_metric_from_string(metric));
  std::printf("%-12s %-7s %-8s %s\n", "config", "scale", "status", metric.c_str());
  for (const auto& r : ranked) {
    double v = metric == "test_auc" ? r.test_auc
               : metric == "test_sensitivity" ? r.test_sensitivity
                                              : r.test_accuracy;
    std::printf("%-12s %-7s %-8s %s\n", r.config_name.c_str(), r.scale.c_str(),
                r.status.c_str(), r.ok() ? fmt_double(v).c_str() : "-");
  }
  return 0;
}

int cmd_roi_template(const std::string& out) {
  RoiSpec::builtin_default().save(out);
  std::cout << "wrote default ROI table -> " << out << "\n";
  return 0;
}

int cmd_init_weights(std::uint64_t seed, const std::string& out) {
  nn::ResNet18<float> model;
  model.init(seed);
  nlohmann::ordered_json meta;
  meta["note"] = "random-initialized backbone weights";
  meta["init_seed"] = seed;
  save_weights(snapshot_model(model, std::move(meta)), out);
  std::cout << "wrote backbone weights (seed " << seed << ") -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-based face classification toolkit"};
  app.require_subcommand(1);

  std::string root, out, canon_text = "37.5,60,92.5,60";
  auto* ingest = app.add_subcommand("ingest", "align raw faces into the canonical frame");
  ingest->add_option("--root", root, "raw tree: {positive,negative}/{train,val,test} + eyes.csv")
      ->required();
  ingest->add_option("--out", out, "output directory for aligned images + manifest")->required();
  ingest->add_option("--canon", canon_text, "canonical eye positions lx,ly,rx,ry");

  std::string fixture_spec_path;
  std::uint64_t fixture_seed = 7;
  auto* fixture = app.add_subcommand("fixture", "generate a synthetic planted-signal dataset");
  fixture->add_option("--out", out, "output directory")->required();
  auto* seed_opt = fixture->add_option("--seed", fixture_seed, "fixture RNG seed");
  fixture->add_option("--spec", fixture_spec_path, "fixture spec JSON (optional)");

  std::string roi_path, config_name, scale_name = "medium", in_dir;
  auto* mask = app.add_subcommand("mask", "export privacy-preserving masked patches");
  mask->add_option("--spec", roi_path, "ROI table JSON (default: builtin)");
  mask->add_option("--config", config_name, "patch configuration, e.g. F+N+LC")->required();
  mask->add_option("--scale", scale_name, "large|medium|small");
  mask->add_option("--in", in_dir, "directory of aligned 150x130 images")->required();
  mask->add_option("--out", out, "output directory")->required();

  std::string manifest_path;
  TrainConfig train_cfg;
  auto* train = app.add_subcommand("train", "train one (configuration, scale) cell");
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--spec", roi_path, "ROI table JSON (default: builtin)");
  train->add_option("--config", config_name, "patch configuration")->required();
  train->add_option("--scale", scale_name, "large|medium|small");
  train->add_option("--out", out, "output directory")->required();
  add_train_flags(train, train_cfg);

  std::string checkpoint_path, split_name = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--split", split_name, "train|val|test");
  eval->add_option("--out", out, "output directory")->required();

  std::string grid_config;
  bool resume = false;
  int workers = 1;
  auto* grid = app.add_subcommand("grid", "run the full configuration x scale grid");
  grid->add_option("--config", grid_config, "grid config JSON")->required();
  grid->add_flag("--resume", resume, "skip cells whose outputs are complete");
  grid->add_option("--workers", workers, "concurrent cells");

  std::string summary_path, plot_dir, metric = "test_auc";
  auto* report = app.add_subcommand("report", "render ROC figures from a grid summary");
  report->add_option("--summary", summary_path, "summary.json from a grid run")->required();
  report->add_option("--plot", plot_dir, "output directory for SVG figures")->required();

  auto* rank = app.add_subcommand("rank", "rank grid cells by a test metric");
  rank->add_option("--summary", summary_path, "summary.json from a grid run")->required();
  rank->add_option("--metric", metric, "test_auc|test_sensitivity|test_accuracy");

  auto* roi_template = app.add_subcommand("roi-template", "write the default ROI table");
  roi_template->add_option("--out", out, "output JSON path")->required();

  std::uint64_t weights_seed = 0;
  auto* init_weights = app.add_subcommand("init-weights",
                                          "write a deterministic random-init weights file");
  init_weights->add_option("--seed", weights_seed, "init seed");
  init_weights->add_option("--out", out, "output weights path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(root, out, canon_text);
    if (app.got_subcommand(fixture))
      return cmd_fixture(fixture_spec_path, out, fixture_seed, seed_opt->count() > 0);
    if (app.got_subcommand(mask)) return cmd_mask(roi_path, config_name, scale_name, in_dir, out);
    if (app.got_subcommand(train))
      return cmd_train(manifest_path, roi_path, config_name, scale_name, out, train_cfg);
    if (app.got_subcommand(eval)) return cmd_eval(checkpoint_path, manifest_path, split_name, out);
    if (app.got_subcommand(grid)) return cmd_grid(grid_config, resume, workers);
    if (app.got_subcommand(report)) return cmd_report(summary_path, plot_dir);
    if (app.got_subcommand(rank)) return cmd_rank(summary_path, metric);
    if (app.got_subcommand(roi_template)) return cmd_roi_template(out);
    if (app.got_subcommand(init_weights)) return cmd_init_weights(weights_seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
