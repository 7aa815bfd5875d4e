#pragma once

#include <algorithm>
#include <stdexcept>

namespace cutpaste {

// Axis-aligned pixel box; origin top-left, extents in pixels.
struct BoundingBox {
  int x = 0, y = 0, w = 0, h = 0;

  int x1() const { return x + w; }
  int y1() const { return y + h; }

  bool valid() const { return w >= 1 && h >= 1; }
  bool inside(int img_w, int img_h) const {
    return x >= 0 && y >= 0 && x1() <= img_w && y1() <= img_h;
  }

  bool operator==(const BoundingBox&) const = default;
};

// True iff the intersection has positive area; touching edges do not count.
inline bool boxes_overlap(const BoundingBox& a, const BoundingBox& b) {
  return a.x < b.x1() && b.x < a.x1() && a.y < b.y1() && b.y < a.y1();
}

}  // namespace cutpaste
