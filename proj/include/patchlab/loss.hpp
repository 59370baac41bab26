#pragma once

#include <cmath>

#include "patchlab/common.hpp"

namespace patchlab {

// Overflow-safe sigmoid, clamped into the open interval so scores stay
// usable as probabilities even when the logit saturates double precision.
inline double sigmoid(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    double e = std::exp(z);
    s = e / (1.0 + e);
  }
  constexpr double lo = 2.2250738585072014e-308;  // DBL_MIN
  constexpr double hi = 1.0 - 1.1102230246251565e-16;
  return std::min(std::max(s, lo), hi);
}

// Binary cross-entropy computed directly from the logit in the fused form
// max(z,0) - z*y + log(1 + exp(-|z|)), finite for any representable z.
inline double bce_with_logits(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
}

// d(loss)/dz = sigmoid(z) - y
inline double bce_with_logits_grad(double z, double y) { return sigmoid(z) - y; }

// Classifier head output: the raw logit and its sigmoid probability.
struct ModelOutput {
  double logit = 0.0;
  double probability = 0.5;

  static ModelOutput from_logit(double z) { return {z, sigmoid(z)}; }
};

}  // namespace patchlab
