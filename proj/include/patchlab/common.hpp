#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace patchlab {

inline constexpr int kCanonicalHeight = 150;
inline constexpr int kCanonicalWidth  = 130;
inline constexpr int kCanonicalChannels = 3;

// Error taxonomy: ConfigError for bad configs/specs caught at load time,
// IngestError for per-image ingestion failures (carries the image id),
// IoError for filesystem trouble, ContractError for violated preconditions.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IngestError : std::runtime_error {
  std::string image_id;
  IngestError(std::string id, const std::string& what)
      : std::runtime_error("[" + id + "] " + what), image_id(std::move(id)) {}
};

struct Point {
  double x = 0.0;  // column, viewer frame
  double y = 0.0;  // row
};

// Axis-aligned integer rectangle, half-open: rows [top, top+height),
// cols [left, left+width).
struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  int bottom() const { return top + height; }
  int right() const { return left + width; }
  long area() const { return static_cast<long>(height) * width; }

  bool contains(const Rect& inner) const {
    return inner.top >= top && inner.left >= left &&
           inner.bottom() <= bottom() && inner.right() <= right();
  }
  bool within_frame(int frame_h, int frame_w) const {
    return top >= 0 && left >= 0 && height > 0 && width > 0 &&
           bottom() <= frame_h && right() <= frame_w;
  }
  bool operator==(const Rect&) const = default;
};

// FNV-1a, used for config fingerprints. Stable across platforms.
struct Fnv1a {
  std::uint64_t state = 14695981039346656037ull;

  void feed(const void* data, std::size_t n) {
    auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 1099511628211ull;
    }
  }
  void feed(std::string_view s) { feed(s.data(), s.size()); }
  void feed(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    feed(b, 8);
  }
  std::uint64_t value() const { return state; }
};

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace patchlab
