#pragma once

#include <algorithm>

#include "relforge/errors.hpp"

namespace relforge {

// Axis-aligned box in normalized image coordinates, origin top-left.
// Valid iff 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
struct NormBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool valid() const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 && x1 < x2 && y1 < y2;
  }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  bool operator==(const NormBox&) const = default;

  static NormBox checked(double x1, double y1, double x2, double y2) {
    NormBox b{x1, y1, x2, y2};
    if (!b.valid()) {
      throw InvalidBox("invalid normalized box [" + std::to_string(x1) + ", " +
                       std::to_string(y1) + ", " + std::to_string(x2) + ", " +
                       std::to_string(y2) + "]");
    }
    return b;
  }
};

// Intersection clipped to a valid region, or a degenerate box; callers decide how
// to treat emptiness.
inline NormBox intersect(const NormBox& a, const NormBox& b) {
  return NormBox{std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2),
                 std::min(a.y2, b.y2)};
}

}  // namespace relforge
