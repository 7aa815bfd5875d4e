#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cutpaste/box.hpp"
#include "cutpaste/compositor.hpp"
#include "cutpaste/rng.hpp"
#include "cutpaste/scene.hpp"

namespace cutpaste {

// No legal destination was found; callers skip the instance and count it.
struct placement_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PastePlacement {
  BoundingBox box_prime;  // same w,h as the source box
  int attempts = 0;
  bool used_fallback = false;
};

struct PasteBounds {
  int xmin = 0, xmax = -1, ymin = 0, ymax = -1;
  bool empty() const { return xmax < xmin || ymax < ymin; }
};

// Valid top-left positions keep the context viewport of the patch inside the
// image, so pasted patches never hit the crop-clamping path that source
// patches (placed with a margin) never hit either.
inline PasteBounds paste_bounds(int img_w, int img_h, int w, int h,
                                double context_frac = kContextFrac) {
  const int mx = static_cast<int>(std::ceil(context_frac * w));
  const int my = static_cast<int>(std::ceil(context_frac * h));
  return {mx, img_w - w - mx, my, img_h - h - my};
}

inline bool overlaps_any(const BoundingBox& b, const Scene& scene) {
  for (const Instance& inst : scene.instances)
    if (boxes_overlap(b, inst.box)) return true;
  return false;
}

// Strategy 1: top-left uniform over valid positions, rejecting overlap with
// every instance box.
inline PastePlacement sample_uniform(const Scene& scene, const BoundingBox& box,
                                     Rng& rng,
                                     double context_frac = kContextFrac) {
  const PasteBounds pb =
      paste_bounds(scene.image.w, scene.image.h, box.w, box.h, context_frac);
  if (pb.empty())
    throw placement_error("sample_uniform: box too large for any placement");
  PastePlacement out;
  for (out.attempts = 1; out.attempts <= 100; ++out.attempts) {
    BoundingBox cand{pb.xmin + rng.below(pb.xmax - pb.xmin + 1),
                     pb.ymin + rng.below(pb.ymax - pb.ymin + 1), box.w, box.h};
    if (!overlaps_any(cand, scene)) {
      out.box_prime = cand;
      return out;
    }
  }
  throw placement_error(
      "sample_uniform: no non-overlapping placement in 100 draws");
}

// Raw scanline displacement magnitude: Normal(2W, W) truncated at >= 0.
inline double scanline_offset(Rng& rng, double box_width) {
  for (;;) {
    const double d = double(rng.normal()) * box_width + 2.0 * box_width;
    if (d >= 0.0) return d;
  }
}

// Strategy 2: same row, horizontal shift ~ Normal(2W, W), direction uniform.
// Falls back to sample_uniform after 20 rejected draws.
inline PastePlacement sample_scanline(const Scene& scene,
                                      const BoundingBox& box, Rng& rng,
                                      double context_frac = kContextFrac) {
  const PasteBounds pb =
      paste_bounds(scene.image.w, scene.image.h, box.w, box.h, context_frac);
  if (pb.empty())
    throw placement_error("sample_scanline: box too large for any placement");
  const int y = std::clamp(box.y, pb.ymin, pb.ymax);
  PastePlacement out;
  for (out.attempts = 1; out.attempts <= 20; ++out.attempts) {
    const double mag = scanline_offset(rng, double(box.w));
    const int dx = rng.coin() ? static_cast<int>(std::lround(mag))
                              : -static_cast<int>(std::lround(mag));
    BoundingBox cand{std::clamp(box.x + dx, pb.xmin, pb.xmax), y, box.w, box.h};
    if (!overlaps_any(cand, scene)) {
      out.box_prime = cand;
      return out;
    }
  }
  out = sample_uniform(scene, box, rng, context_frac);
  out.attempts += 20;
  out.used_fallback = true;
  return out;
}

}  // namespace cutpaste
