#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "cutpaste/box.hpp"
#include "cutpaste/image.hpp"
#include "cutpaste/ops.hpp"

namespace cutpaste {

// 28x28 soft alpha matte in [0,1]; sigmoid output, endpoints open.
using Mask = Tensor;

constexpr int kMaskSize = 28;
constexpr int kViewportPad = 3;
constexpr int kPatchSize = kMaskSize + 2 * kViewportPad;  // 34
constexpr double kContextFrac = double(kViewportPad) / double(kMaskSize);

enum class PatchKind { real, fake, cut_real, cut_fake };

struct CompositePatch {
  Tensor values;  // out x out x 3 in [0,1]
  PatchKind kind = PatchKind::real;
};

// Crop of the box grown by context_frac*w / context_frac*h per side (clamped
// to the image), box-filter resampled to out x out. Real and composited
// patches both come through here; there is no second resampling path.
inline Tensor extract_patch(const Image8& image, const BoundingBox& box,
                            double context_frac = kContextFrac,
                            int out = kPatchSize) {
  if (!box.valid()) throw std::invalid_argument("extract_patch: degenerate box");
  if (!box.inside(image.w, image.h))
    throw std::invalid_argument("extract_patch: box outside image");
  const double ex = context_frac * box.w;
  const double ey = context_frac * box.h;
  const double x0 = std::max(0.0, box.x - ex);
  const double y0 = std::max(0.0, box.y - ey);
  const double x1 = std::min(double(image.w), box.x + box.w + ex);
  const double y1 = std::min(double(image.h), box.y + box.h + ey);
  return area_resample(image, x0, y0, x1, y1, out, out);
}

// 3 px zero border: the discriminator viewport around the pasted region.
inline Tensor pad_mask(const Mask& mask) {
  if (mask.rank() != 2 || mask.dim(0) != kMaskSize || mask.dim(1) != kMaskSize)
    throw std::invalid_argument("pad_mask: mask must be 28x28");
  return pad2d(mask, kViewportPad);
}

// Patch-resolution alpha. With viewport padding the mask sits inside a zero
// border; without it the mask is stretched over the whole patch, which makes
// an all-ones mask reproduce the foreground patch exactly.
inline Tensor viewport_alpha(const Mask& mask, bool viewport_padding) {
  if (viewport_padding) return pad_mask(mask);
  return resize_bilinear(mask, kPatchSize, kPatchSize);
}

namespace detail {

inline void check_alpha_range(const Tensor& alpha) {
  for (float v : alpha.values())
    if (!(v >= -1e-4f && v <= 1.f + 1e-4f))
      throw std::invalid_argument("composite: alpha outside [0,1]");
}

}  // namespace detail

// F = alpha*fg + (1-alpha)*bg; differentiable w.r.t. alpha.
inline CompositePatch composite(const Tensor& fg, const Tensor& bg,
                                const Tensor& alpha) {
  detail::check_alpha_range(alpha);
  return {blend(fg, bg, alpha), PatchKind::fake};
}

// Post-cut backgrounds: (1-alpha)*fg is what remains at the source box,
// (1-alpha)*bg the same cut applied to the paste destination.
inline std::pair<CompositePatch, CompositePatch> cut_pair(const Tensor& fg,
                                                          const Tensor& bg,
                                                          const Tensor& alpha) {
  detail::check_alpha_range(alpha);
  Tensor zeros(fg.shape());
  return {{blend(zeros, fg, alpha), PatchKind::cut_real},
          {blend(zeros, bg, alpha), PatchKind::cut_fake}};
}

// Bicubic resize of the soft mask to box size, then threshold at 0.5.
inline Tensor upsample_mask_for_eval(const Mask& mask, const BoundingBox& box) {
  if (!box.valid())
    throw std::invalid_argument("upsample_mask_for_eval: degenerate box");
  Tensor soft = bicubic_resize(mask, box.h, box.w);
  for (float& v : soft.values()) v = v >= 0.5f ? 1.f : 0.f;
  return soft;
}

}  // namespace cutpaste
