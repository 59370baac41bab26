#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/common.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/nn.hpp"

namespace patchlab {

// All training hyperparameters in one validated record. The defaults are the
// experiment configuration used throughout: SGD(1e-3, momentum 0.9), step
// decay 0.1 every 7 epochs, 30 epochs, 150x130x3 inputs, checkpoint by best
// validation accuracy.
struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  int step_size = 7;
  double gamma = 0.1;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;

  // per-channel constants applied to [0,1]-scaled pixels after masking;
  // the defaults are the pretrained backbone's original corpus statistics
  std::array<double, 3> norm_mean = {0.485, 0.456, 0.406};
  std::array<double, 3> norm_std = {0.229, 0.224, 0.225};

  bool pretrained = false;
  std::string weights_path;

  // Backbone input size. 150x130 reproduces the reference setup; smaller
  // values downscale after mask + normalization for reduced desk-scale runs.
  int input_height = kCanonicalHeight;
  int input_width = kCanonicalWidth;

  // Batch-norm running-stat momentum. 0.1 suits the reference 30-epoch run;
  // reduced runs of a handful of epochs need a larger value or the eval-mode
  // statistics lag hopelessly behind the trained weights.
  double bn_momentum = 0.1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("train: momentum must lie in [0,1)");
    if (step_size < 1) throw ConfigError("train: step_size must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("train: gamma must lie in (0,1)");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (input_height < 8 || input_width < 8)
      throw ConfigError("train: input size must be at least 8x8");
    for (double s : norm_std)
      if (!(s > 0.0)) throw ConfigError("train: normalization std must be positive");
    if (pretrained && weights_path.empty())
      throw ConfigError("train: pretrained requested but no weights path given");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
      throw ConfigError("train: bn_momentum must lie in (0,1]");
    // final-epoch learning rate must not underflow to zero
    double last = lr * std::pow(gamma, (epochs - 1) / step_size);
    if (!(last > 0.0)) throw ConfigError("train: schedule underflows to zero lr");
  }

  void feed_fingerprint(Fnv1a& h) const {
    h.feed(fmt_double(lr));
    h.feed(fmt_double(momentum));
    h.feed(static_cast<std::uint64_t>(step_size));
    h.feed(fmt_double(gamma));
    h.feed(static_cast<std::uint64_t>(epochs));
    h.feed(static_cast<std::uint64_t>(batch_size));
    h.feed(seed);
    for (double v : norm_mean) h.feed(fmt_double(v));
    for (double v : norm_std) h.feed(fmt_double(v));
    h.feed(std::uint64_t(pretrained ? 1 : 0));
    h.feed(weights_path);
    h.feed(static_cast<std::uint64_t>(input_height));
    h.feed(static_cast<std::uint64_t>(input_width));
    h.feed(fmt_double(bn_momentum));
  }

  std::string fingerprint() const {
    Fnv1a h;
    feed_fingerprint(h);
    return to_hex(h.value());
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["lr"] = lr;
    j["momentum"] = momentum;
    j["step_size"] = step_size;
    j["gamma"] = gamma;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["norm_mean"] = norm_mean;
    j["norm_std"] = norm_std;
    j["pretrained"] = pretrained;
    j["weights_path"] = weights_path;
    j["input_height"] = input_height;
    j["input_width"] = input_width;
    j["bn_momentum"] = bn_momentum;
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.step_size = j.value("step_size", c.step_size);
    c.gamma = j.value("gamma", c.gamma);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("norm_mean")) c.norm_mean = j.at("norm_mean").get<std::array<double, 3>>();
    if (j.contains("norm_std")) c.norm_std = j.at("norm_std").get<std::array<double, 3>>();
    c.pretrained = j.value("pretrained", c.pretrained);
    c.weights_path = j.value("weights_path", c.weights_path);
    c.input_height = j.value("input_height", c.input_height);
    c.input_width = j.value("input_width", c.input_width);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.validate();
    return c;
  }
};

// Piecewise-constant step decay: lr * gamma^floor(epoch / step_size).
// The product is re-rounded to 15 significant decimal digits so that
// decimal-specified hyperparameters yield the decimal ladder they imply
// (1e-3 decayed by 0.1 four times is exactly 1e-7); binary evaluation alone
// drifts off those values by an ulp.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw ContractError("lr_at_epoch: epoch " + std::to_string(epoch) +
                        " outside [0, " + std::to_string(cfg.epochs) + ")");
  int k = epoch / cfg.step_size;
  double raw = cfg.lr * std::pow(cfg.gamma, static_cast<double>(k));
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), raw, std::chars_format::general, 15);
  double rounded = raw;
  std::from_chars(buf, res.ptr, rounded);
  return rounded;
}

// Classical (heavy-ball) momentum, no dampening, no Nesterov:
//   v' = momentum * v + g;  w' = w - lr * v'
template <typename T>
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}

  void step(std::vector<nn::Param<T>>& params, double lr) {
    if (velocity_.size() != params.size()) {
      velocity_.clear();
      for (const auto& p : params) velocity_.emplace_back(p.value->shape);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& v = velocity_[i];
      const Tensor<T>& g = *params[i].grad;
      Tensor<T>& w = *params[i].value;
      for (std::size_t j = 0; j < v.numel(); ++j) {
        v.data[j] = static_cast<T>(momentum_ * v.data[j] + g.data[j]);
        w.data[j] -= static_cast<T>(lr) * v.data[j];
      }
    }
  }

  const std::vector<Tensor<T>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace patchlab
