#include <doctest.h>

#include <cmath>

#include "patchlab/align.hpp"
#include "patchlab/rng.hpp"

using namespace patchlab;

namespace {

ImageU8 random_image(int h, int w, Rng& rng) {
  ImageU8 img(h, w, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("two-point similarity solve recovers rotation, scale and translation") {
  // eyes at ((40,60),(90,60)) -> canon ((37.5,60),(92.5,60)): pure scale 55/50
  auto t = SimilarityTransform::from_point_pairs({40, 60}, {37.5, 60},
                                                 {90, 60}, {92.5, 60});
  CHECK(t.scale() == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(t.rotation() == doctest::Approx(0.0).epsilon(1e-12));
  Point l = t.apply({40, 60});
  Point r = t.apply({90, 60});
  CHECK(std::hypot(l.x - 37.5, l.y - 60.0) <= 1e-6);
  CHECK(std::hypot(r.x - 92.5, r.y - 60.0) <= 1e-6);
}

TEST_CASE("similarity maps both landmarks exactly for random point pairs") {
  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    Point p1{rng.uniform(0, 400), rng.uniform(0, 300)};
    Point p2{p1.x + rng.uniform(5, 200), rng.uniform(0, 300)};
    Point q1{rng.uniform(10, 60), rng.uniform(20, 120)};
    Point q2{q1.x + rng.uniform(30, 60), rng.uniform(20, 120)};
    auto t = SimilarityTransform::from_point_pairs(p1, q1, p2, q2);
    Point a = t.apply(p1), b = t.apply(p2);
    CHECK(std::hypot(a.x - q1.x, a.y - q1.y) <= 1e-6);
    CHECK(std::hypot(b.x - q2.x, b.y - q2.y) <= 1e-6);
    // round trip
    Point inv = t.apply_inverse(b);
    CHECK(std::hypot(inv.x - p2.x, inv.y - p2.y) <= 1e-6);
  }
}

TEST_CASE("align_face is the identity on an already-canonical image") {
  Rng rng(3);
  ImageU8 raw = random_image(kCanonicalHeight, kCanonicalWidth, rng);
  EyeAnnotation ann{"canon", {37.5, 60}, {92.5, 60}};
  ImageU8 out = align_face(raw, ann, {});
  CHECK(out == raw);
}

TEST_CASE("align_face rejects swapped eyes") {
  ImageU8 raw(200, 200, 3);
  EyeAnnotation ann{"swapped", {120, 80}, {60, 80}};
  CHECK_THROWS_AS(align_face(raw, ann, {}), IngestError);
}

TEST_CASE("align_face rejects degenerate annotations") {
  ImageU8 raw(200, 200, 3);
  EyeAnnotation ann{"tiny", {100, 80}, {101, 80}};
  CHECK_THROWS_AS(align_face(raw, ann, {}), IngestError);
  EyeAnnotation oob{"oob", {-4, 80}, {150, 80}};
  CHECK_THROWS_AS(align_face(raw, oob, {}), IngestError);
}

TEST_CASE("align_face output shape and zero fill outside the source") {
  // Small source far from covering the canonical frame: corners must be 0.
  ImageU8 raw(40, 60, 3);
  for (auto& v : raw.data) v = 200;
  EyeAnnotation ann{"small", {15, 20}, {45, 20}};
  ImageU8 out = align_face(raw, ann, {});
  CHECK(out.height == kCanonicalHeight);
  CHECK(out.width == kCanonicalWidth);
  CHECK(out.channels == 3);
  // bottom rows map far below the 40-row source
  for (int c = 0; c < 3; ++c) {
    CHECK(out.at(kCanonicalHeight - 1, 0, c) == 0);
    CHECK(out.at(kCanonicalHeight - 1, kCanonicalWidth - 1, c) == 0);
  }
}

TEST_CASE("aligned eyes land on canon for rotated and scaled faces") {
  // Rotated pair: construct the annotation, align, then check that the
  // computed forward transform puts both eyes on canon within 1e-6 px.
  CanonicalEyes canon;
  for (double angle : {-0.35, -0.1, 0.2, 0.6}) {
    double cx = 160, cy = 140, d = 70;
    Point le{cx - d / 2 * std::cos(angle), cy - d / 2 * std::sin(angle)};
    Point re{cx + d / 2 * std::cos(angle), cy + d / 2 * std::sin(angle)};
    auto t = SimilarityTransform::from_point_pairs(le, canon.left, re, canon.right);
    Point a = t.apply(le), b = t.apply(re);
    CHECK(std::hypot(a.x - canon.left.x, a.y - canon.left.y) <= 1e-6);
    CHECK(std::hypot(b.x - canon.right.x, b.y - canon.right.y) <= 1e-6);
    CHECK(t.scale() == doctest::Approx(55.0 / d).epsilon(1e-9));
    CHECK(t.rotation() == doctest::Approx(-angle).epsilon(1e-9));
  }
}
