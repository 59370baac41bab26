#pragma once

#include <cmath>
#include <complex>
#include <string>

#include "patchlab/common.hpp"
#include "patchlab/image.hpp"

namespace patchlab {

// Eye landmarks in raw-image coordinates, viewer frame: left_eye is the eye
// nearer the image's left edge, so left_eye.x < right_eye.x always holds for
// a valid record.
struct EyeAnnotation {
  std::string image_id;
  Point left_eye;
  Point right_eye;

  void validate(int raw_h, int raw_w) const {
    auto inside = [&](const Point& p) {
      return p.x >= 0.0 && p.x < raw_w && p.y >= 0.0 && p.y < raw_h;
    };
    if (!(left_eye.x < right_eye.x))
      throw IngestError(image_id, "eye annotation rejected: left_eye.x must be < right_eye.x (viewer frame)");
    if (!inside(left_eye) || !inside(right_eye))
      throw IngestError(image_id, "eye annotation rejected: landmark outside raw image bounds");
    double dx = right_eye.x - left_eye.x;
    double dy = right_eye.y - left_eye.y;
    if (std::hypot(dx, dy) < 2.0)
      throw IngestError(image_id, "eye annotation rejected: degenerate (eye distance < 2 px)");
  }
};

// Canonical eye positions inside the 150x130 aligned frame. The defaults are
// horizontally symmetric about the frame's vertical midline.
struct CanonicalEyes {
  Point left{37.5, 60.0};
  Point right{92.5, 60.0};

  void validate() const {
    auto inside = [](const Point& p) {
      return p.x >= 0.0 && p.x < kCanonicalWidth && p.y >= 0.0 && p.y < kCanonicalHeight;
    };
    if (!inside(left) || !inside(right) || !(left.x < right.x))
      throw ConfigError("canonical eye positions must lie inside the 150x130 frame with left.x < right.x");
  }
};

// Rotation + uniform scale + translation, the unique similarity mapping two
// source landmarks onto two destination landmarks. Stored as a complex
// multiplier plus offset: T(p) = a*p + t with p read as x + iy.
class SimilarityTransform {
 public:
  using C = std::complex<double>;

  static SimilarityTransform from_point_pairs(Point src1, Point dst1,
                                              Point src2, Point dst2) {
    C p1{src1.x, src1.y}, p2{src2.x, src2.y};
    C q1{dst1.x, dst1.y}, q2{dst2.x, dst2.y};
    C dp = p2 - p1;
    if (std::abs(dp) == 0.0)
      throw ContractError("similarity transform needs two distinct source points");
    SimilarityTransform t;
    t.a_ = (q2 - q1) / dp;
    t.t_ = q1 - t.a_ * p1;
    return t;
  }

  Point apply(Point p) const {
    C r = a_ * C{p.x, p.y} + t_;
    return {r.real(), r.imag()};
  }
  Point apply_inverse(Point q) const {
    C r = (C{q.x, q.y} - t_) / a_;
    return {r.real(), r.imag()};
  }

  double scale() const { return std::abs(a_); }
  double rotation() const { return std::arg(a_); }
  bool is_identity() const { return a_ == C{1.0, 0.0} && t_ == C{0.0, 0.0}; }

 private:
  C a_{1.0, 0.0};
  C t_{0.0, 0.0};
};

namespace detail {

// Bilinear sample with zero outside the source; neighbors that fall off the
// image contribute 0 with their weight, so edge pixels fade to black rather
// than clamp-stretch.
inline double sample_bilinear(const ImageU8& img, double x, double y, int ch) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double dx = x - x0, dy = y - y0;
  double acc = 0.0;
  for (int j = 0; j < 2; ++j) {
    int yy = y0 + j;
    if (yy < 0 || yy >= img.height) continue;
    double wy = j ? dy : 1.0 - dy;
    if (wy == 0.0) continue;
    for (int i = 0; i < 2; ++i) {
      int xx = x0 + i;
      if (xx < 0 || xx >= img.width) continue;
      double wx = i ? dx : 1.0 - dx;
      if (wx == 0.0) continue;
      acc += wy * wx * img.at(yy, xx, ch);
    }
  }
  return acc;
}

}  // namespace detail

// Warps a raw face into the canonical 150x130x3 frame so that the annotated
// eyes land exactly on the canonical eye positions. Out-of-source pixels are
// filled with 0.
inline ImageU8 align_face(const ImageU8& raw, const EyeAnnotation& ann,
                          const CanonicalEyes& canon = {}) {
  if (raw.channels != 3) throw IngestError(ann.image_id, "expected 3-channel image");
  canon.validate();
  ann.validate(raw.height, raw.width);

  auto t = SimilarityTransform::from_point_pairs(ann.left_eye, canon.left,
                                                 ann.right_eye, canon.right);
  if (t.is_identity() && raw.height == kCanonicalHeight && raw.width == kCanonicalWidth)
    return raw;

  ImageU8 out(kCanonicalHeight, kCanonicalWidth, 3);
  for (int y = 0; y < kCanonicalHeight; ++y) {
    for (int x = 0; x < kCanonicalWidth; ++x) {
      Point src = t.apply_inverse({static_cast<double>(x), static_cast<double>(y)});
      for (int c = 0; c < 3; ++c) {
        double v = detail::sample_bilinear(raw, src.x, src.y, c);
        out.at(y, x, c) = static_cast<std::uint8_t>(
            std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return out;
}

}  // namespace patchlab
