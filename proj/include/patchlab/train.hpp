#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "patchlab/dataset.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/loss.hpp"
#include "patchlab/nn.hpp"
#include "patchlab/optim.hpp"
#include "patchlab/roi.hpp"
#include "patchlab/serialize.hpp"

namespace patchlab {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The backbone sits behind this seam: a fresh deterministic initialization,
// optionally overwritten by a weights file. Requesting pretrained weights
// without a readable source is an error, never a silent random init.
struct BackboneOptions {
  bool pretrained = false;
  std::string weights_path;
  std::uint64_t init_seed = 0;
};

inline nn::ResNet18<float> build_model(const BackboneOptions& opt) {
  nn::ResNet18<float> model;
  model.init(opt.init_seed);
  if (opt.pretrained) {
    if (opt.weights_path.empty() || !std::filesystem::exists(opt.weights_path))
      throw ConfigError("pretrained weights requested but source unavailable: '" +
                        opt.weights_path + "'");
    restore_model(model, load_weights(opt.weights_path));
  }
  return model;
}

// One preprocessed example: masked in raw 8-bit space, scaled to [0,1],
// channel-normalized, then (only if the configured input size differs from
// the canonical frame) bilinearly downscaled.
struct TrainExample {
  std::string image_id;
  Tensor<float> input;  // [3, H, W]
  float label = 0.0f;
};

namespace detail {

inline Tensor<float> resize_bilinear_chw(const Tensor<float>& src, int oh, int ow) {
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor<float> dst({c, oh, ow});
  const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (int ch = 0; ch < c; ++ch) {
    const float* in = src.ptr() + static_cast<std::size_t>(ch) * h * w;
    float* out = dst.ptr() + static_cast<std::size_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      double dy = fy - y0;
      int ya = std::clamp(y0, 0, h - 1), yb = std::clamp(y0 + 1, 0, h - 1);
      for (int x = 0; x < ow; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        double dx = fx - x0;
        int xa = std::clamp(x0, 0, w - 1), xb = std::clamp(x0 + 1, 0, w - 1);
        double v = (1 - dy) * ((1 - dx) * in[ya * w + xa] + dx * in[ya * w + xb]) +
                   dy * ((1 - dx) * in[yb * w + xa] + dx * in[yb * w + xb]);
        out[y * ow + x] = static_cast<float>(v);
      }
    }
  }
  return dst;
}

}  // namespace detail

// Checkpoints carry enough metadata to rebuild their preprocessing, so
// evaluation needs nothing beyond the checkpoint and a manifest.
inline void stamp_checkpoint_meta(WeightsFile& wf, const PatchConfig& config,
                                  const std::string& scale_label, const TrainConfig& cfg,
                                  const RoiSpec& roi) {
  wf.meta["config"] = config.name;
  wf.meta["scale"] = scale_label;
  wf.meta["train"] = cfg.to_json();
  wf.meta["roi"] = roi.to_json();
}

inline TrainExample preprocess_example(const AlignedImage& img, const Mask& mask,
                                       const TrainConfig& cfg) {
  img.validate();
  ImageU8 masked = apply_mask(img.pixels, mask);
  Tensor<float> t({3, kCanonicalHeight, kCanonicalWidth});
  for (int c = 0; c < 3; ++c) {
    float* out = t.ptr() + static_cast<std::size_t>(c) * kCanonicalHeight * kCanonicalWidth;
    const double mean = cfg.norm_mean[static_cast<std::size_t>(c)];
    const double inv_std = 1.0 / cfg.norm_std[static_cast<std::size_t>(c)];
    for (int y = 0; y < kCanonicalHeight; ++y)
      for (int x = 0; x < kCanonicalWidth; ++x)
        out[y * kCanonicalWidth + x] =
            static_cast<float>((masked.at(y, x, c) / 255.0 - mean) * inv_std);
  }
  if (cfg.input_height != kCanonicalHeight || cfg.input_width != kCanonicalWidth)
    t = detail::resize_bilinear_chw(t, cfg.input_height, cfg.input_width);
  return {img.image_id, std::move(t), static_cast<float>(img.label)};
}

inline std::vector<TrainExample> preprocess(const std::vector<AlignedImage>& images,
                                            const Mask& mask, const TrainConfig& cfg) {
  std::vector<TrainExample> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(preprocess_example(img, mask, cfg));
  return out;
}

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainOutcome {
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  long best_val_correct = 0;
  long best_val_total = 0;
  WeightsFile best_weights;
  std::vector<EpochRow> history;
};

inline void save_history(const std::vector<EpochRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history " + path);
  out << "epoch,lr,train_loss,val_loss,val_acc\n";
  for (const auto& r : rows)
    out << r.epoch << "," << fmt_double(r.lr) << "," << fmt_double(r.train_loss) << ","
        << fmt_double(r.val_loss) << "," << fmt_double(r.val_acc) << "\n";
}

inline std::vector<EpochRow> load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history " + path);
  std::vector<EpochRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 5) throw IoError("bad history row: " + line);
    rows.push_back({std::stoi(cols[0]), parse_double(cols[1]), parse_double(cols[2]),
                    parse_double(cols[3]), parse_double(cols[4])});
  }
  return rows;
}

namespace detail {

inline Tensor<float> stack_batch(const std::vector<TrainExample>& set,
                                 const std::vector<std::size_t>& order,
                                 std::size_t begin, std::size_t end) {
  const auto& first = set[order[begin]].input;
  Tensor<float> batch({static_cast<int>(end - begin), first.dim(0), first.dim(1),
                       first.dim(2)});
  const std::size_t stride = first.numel();
  for (std::size_t i = begin; i < end; ++i)
    std::copy(set[order[i]].input.data.begin(), set[order[i]].input.data.end(),
              batch.data.begin() + (i - begin) * stride);
  return batch;
}

struct EvalPass {
  double mean_loss = 0.0;
  long correct = 0;
  long total = 0;
  std::vector<ScoredExample> scored;
};

inline EvalPass eval_pass(nn::ResNet18<float>& model, const std::vector<TrainExample>& set,
                          int batch_size) {
  EvalPass out;
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
    std::size_t e = std::min(set.size(), b + static_cast<std::size_t>(batch_size));
    Tensor<float> x = stack_batch(set, order, b, e);
    Tensor<float> z = model.forward(x, /*train=*/false);
    for (std::size_t i = b; i < e; ++i) {
      auto pred = ModelOutput::from_logit(z.data[i - b]);
      double y = set[i].label;
      loss_sum += bce_with_logits(pred.logit, y);
      if ((pred.probability >= 0.5) == (set[i].label > 0.5f)) ++out.correct;
      out.scored.push_back({set[i].image_id, set[i].label > 0.5f ? 1 : 0, pred.probability});
    }
  }
  out.total = static_cast<long>(set.size());
  out.mean_loss = loss_sum / static_cast<double>(set.size());
  return out;
}

}  // namespace detail

// Scores a preprocessed set with the model in eval mode.
inline std::vector<ScoredExample> score_examples(nn::ResNet18<float>& model,
                                                 const std::vector<TrainExample>& set,
                                                 int batch_size = 32) {
  if (set.empty()) throw ConfigError("score_examples: empty set");
  return detail::eval_pass(model, set, batch_size).scored;
}

// The training loop: per epoch, gradient updates over the shuffled train
// split, a forward-only pass over the val split, then the scheduler step.
// Keeps the parameters of the best validation accuracy (earliest epoch on
// ties) and restores them into the model before returning.
inline TrainOutcome train_model(nn::ResNet18<float>& model,
                                const std::vector<TrainExample>& train_set,
                                const std::vector<TrainExample>& val_set,
                                const TrainConfig& cfg,
                                const std::string& config_fingerprint = "") {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw ConfigError("train: both train and val splits must be nonempty");
  for (const auto& ex : train_set)
    if (ex.label != 0.0f && ex.label != 1.0f)
      throw ConfigError("train: labels must be binary");

  TrainOutcome out;
  out.best_epoch = -1;
  model.set_bn_momentum(cfg.bn_momentum);
  SgdMomentum<float> opt(cfg.momentum);
  Rng shuffle_rng(cfg.seed);
  auto params = model.parameters();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size();
         b += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const int n = static_cast<int>(e - b);
      Tensor<float> x = detail::stack_batch(train_set, order, b, e);
      Tensor<float> z = model.forward(x, /*train=*/true);

      double batch_loss = 0.0;
      Tensor<float> gz({n, 1});
      for (int i = 0; i < n; ++i) {
        double y = train_set[order[b + i]].label;
        batch_loss += bce_with_logits(z.data[i], y);
        gz.data[i] = static_cast<float>(bce_with_logits_grad(z.data[i], y) / n);
      }
      batch_loss /= n;
      if (!std::isfinite(batch_loss))
        throw TrainError("non-finite training loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch_index));
      loss_sum += batch_loss * n;

      model.zero_grad();
      model.backward(gz);
      opt.step(params, lr);
    }

    auto val = detail::eval_pass(model, val_set, cfg.batch_size);
    if (!std::isfinite(val.mean_loss))
      throw TrainError("non-finite validation loss at epoch " + std::to_string(epoch));
    double val_acc = static_cast<double>(val.correct) / static_cast<double>(val.total);

    out.history.push_back({epoch, lr, loss_sum / static_cast<double>(train_set.size()),
                           val.mean_loss, val_acc});

    if (out.best_epoch < 0 || val_acc > out.best_val_accuracy) {
      out.best_epoch = epoch;
      out.best_val_accuracy = val_acc;
      out.best_val_correct = val.correct;
      out.best_val_total = val.total;
      nlohmann::ordered_json meta;
      meta["schema"] = "patchlab.checkpoint.v1";
      meta["epoch"] = epoch;
      meta["val_accuracy"] = val_acc;
      meta["val_correct"] = val.correct;
      meta["val_total"] = val.total;
      meta["config_fingerprint"] = config_fingerprint;
      out.best_weights = snapshot_model(model, std::move(meta));
    }
  }

  restore_model(model, out.best_weights);
  return out;
}

}  // namespace patchlab
