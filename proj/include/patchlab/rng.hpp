#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace patchlab {

// Deterministic RNG with hand-rolled distributions. std::mt19937 is fully
// specified by the standard; std::normal_distribution is not, so gaussians
// go through a fixed Box-Muller transform to keep outputs identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform in [0, 1), 32-bit resolution.
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-free modulo (bias negligible for
  // the small n used here, but keep it exact anyway).
  std::uint32_t below(std::uint32_t n) {
    if (n == 0) return 0;
    std::uint64_t threshold = (0x100000000ull / n) * n;
    std::uint64_t v;
    do {
      v = next_u32();
    } while (v >= threshold);
    return static_cast<std::uint32_t>(v % n);
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-12);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace patchlab
