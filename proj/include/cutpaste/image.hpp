#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cutpaste/box.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {

// 8-bit image, row-major, channels interleaved. Scenes are stored in this
// form so that disk round-trips are bit-exact; float views are k/255.
struct Image8 {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> data;

  Image8() = default;
  Image8(int h_, int w_, int c_, uint8_t fill = 0)
      : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

  uint8_t at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  uint8_t& at(int y, int x, int ch) {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }

  bool operator==(const Image8&) const = default;
};

inline uint8_t quantize8(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

// Single definition of the u8 -> float mapping (double divide, then round)
// so resampled unit cells and direct conversions agree bit for bit.
inline float u8_to_float(uint8_t v) {
  return static_cast<float>(v * (1.0 / 255.0));
}

inline Tensor to_float(const Image8& img) {
  Tensor t(img.c == 1 ? Shape{img.h, img.w} : Shape{img.h, img.w, img.c});
  float* out = t.data();
  for (size_t i = 0; i < img.data.size(); ++i) out[i] = u8_to_float(img.data[i]);
  return t;
}

inline Image8 to_image8(const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 3)
    throw std::invalid_argument("to_image8: rank must be 2 or 3");
  Image8 img(t.dim(0), t.dim(1), t.rank() == 3 ? t.dim(2) : 1);
  const float* in = t.data();
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = quantize8(in[i]);
  return img;
}

namespace detail {

struct SpanWeights {
  int start = 0;
  std::vector<double> w;  // per source cell, normalized by total coverage
};

// Coverage of integer source cells [r, r+1) by the interval
// [lo + extent*j/out, lo + extent*(j+1)/out).
inline std::vector<SpanWeights> area_spans(double lo, double hi, int out,
                                           int src_cells) {
  std::vector<SpanWeights> spans(static_cast<size_t>(out));
  const double extent = hi - lo;
  for (int j = 0; j < out; ++j) {
    const double a = lo + extent * j / out;
    const double b = lo + extent * (j + 1) / out;
    int r0 = std::clamp(static_cast<int>(std::floor(a)), 0, src_cells - 1);
    int r1 = std::clamp(static_cast<int>(std::ceil(b)) - 1, 0, src_cells - 1);
    SpanWeights& s = spans[static_cast<size_t>(j)];
    s.start = r0;
    double total = 0.0;
    for (int r = r0; r <= r1; ++r) {
      const double overlap =
          std::max(0.0, std::min(b, double(r + 1)) - std::max(a, double(r)));
      s.w.push_back(overlap);
      total += overlap;
    }
    if (total <= 0.0)
      throw std::invalid_argument("area_resample: empty source interval");
    for (double& v : s.w) v /= total;
  }
  return spans;
}

}  // namespace detail

// Box-filter resample of the continuous rectangle [x0,x1)x[y0,y1) of an 8-bit
// image onto an out_h x out_w grid. Every patch in the pipeline, real or
// composited, is produced by this one function.
inline Tensor area_resample(const Image8& img, double x0, double y0, double x1,
                            double y1, int out_h, int out_w) {
  if (!(x1 > x0) || !(y1 > y0))
    throw std::invalid_argument("area_resample: rectangle has no extent");
  if (x0 < 0 || y0 < 0 || x1 > img.w || y1 > img.h)
    throw std::invalid_argument("area_resample: rectangle outside image");
  const auto ys = detail::area_spans(y0, y1, out_h, img.h);
  const auto xs = detail::area_spans(x0, x1, out_w, img.w);
  const int C = img.c;
  Tensor out(C == 1 ? Shape{out_h, out_w} : Shape{out_h, out_w, C});
  float* o = out.data();
  std::vector<double> acc(static_cast<size_t>(C));
  constexpr double kInv = 1.0 / 255.0;
  for (int j = 0; j < out_h; ++j) {
    const auto& sy = ys[static_cast<size_t>(j)];
    for (int i = 0; i < out_w; ++i) {
      const auto& sx = xs[static_cast<size_t>(i)];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (size_t ry = 0; ry < sy.w.size(); ++ry) {
        const int y = sy.start + static_cast<int>(ry);
        const double wy = sy.w[ry];
        for (size_t rx = 0; rx < sx.w.size(); ++rx) {
          const int x = sx.start + static_cast<int>(rx);
          const double wxy = wy * sx.w[rx];
          const uint8_t* p = img.data.data() + (static_cast<size_t>(y) * img.w + x) * C;
          for (int ch = 0; ch < C; ++ch) acc[static_cast<size_t>(ch)] += wxy * p[ch];
        }
      }
      for (int ch = 0; ch < C; ++ch)
        o[static_cast<size_t>((j * out_w + i) * C + ch)] =
            static_cast<float>(acc[static_cast<size_t>(ch)] * kInv);
    }
  }
  return out;
}

namespace detail {

inline double cubic_kernel(double t) {
  constexpr double a = -0.5;  // Catmull-Rom
  t = std::abs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
  return 0.0;
}

}  // namespace detail

// Bicubic resize (half-pixel centres, clamped edges); input [H x W] or
// [H x W x C]. Used for evaluation-time mask upsampling and rendering.
inline Tensor bicubic_resize(const Tensor& src, int oh, int ow) {
  if (src.rank() != 2 && src.rank() != 3)
    throw std::invalid_argument("bicubic_resize: rank must be 2 or 3");
  const int H = src.dim(0), W = src.dim(1);
  const int C = src.rank() == 3 ? src.dim(2) : 1;
  Tensor out(C == 1 ? Shape{oh, ow} : Shape{oh, ow, C});

  const double sy = double(H) / oh, sx = double(W) / ow;
  std::vector<double> acc(static_cast<size_t>(C));
  for (int j = 0; j < oh; ++j) {
    const double fy = (j + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    double wy[4];
    for (int t = 0; t < 4; ++t) wy[t] = detail::cubic_kernel(fy - (y0 - 1 + t));
    for (int i = 0; i < ow; ++i) {
      const double fx = (i + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      double wx[4];
      for (int t = 0; t < 4; ++t) wx[t] = detail::cubic_kernel(fx - (x0 - 1 + t));
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ty = 0; ty < 4; ++ty) {
        const int yy = std::clamp(y0 - 1 + ty, 0, H - 1);
        for (int tx = 0; tx < 4; ++tx) {
          const int xx = std::clamp(x0 - 1 + tx, 0, W - 1);
          const double w = wy[ty] * wx[tx];
          const float* p = src.data() + static_cast<size_t>(yy * W + xx) * C;
          for (int ch = 0; ch < C; ++ch) acc[static_cast<size_t>(ch)] += w * p[ch];
        }
      }
      float* o = out.data() + static_cast<size_t>(j * ow + i) * C;
      for (int ch = 0; ch < C; ++ch) o[ch] = static_cast<float>(acc[static_cast<size_t>(ch)]);
    }
  }
  return out;
}

inline Tensor flip_horizontal(const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 3)
    throw std::invalid_argument("flip_horizontal: rank must be 2 or 3");
  const int H = t.dim(0), W = t.dim(1);
  const int C = t.rank() == 3 ? t.dim(2) : 1;
  Tensor out(t.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int ch = 0; ch < C; ++ch)
        out.data()[static_cast<size_t>((y * W + x) * C + ch)] =
            t.data()[static_cast<size_t>((y * W + (W - 1 - x)) * C + ch)];
  return out;
}

// Float crop of a box region, values k/255.
inline Tensor crop_to_float(const Image8& img, const BoundingBox& box) {
  if (!box.valid() || !box.inside(img.w, img.h))
    throw std::invalid_argument("crop_to_float: box outside image");
  const int C = img.c;
  Tensor out(C == 1 ? Shape{box.h, box.w} : Shape{box.h, box.w, C});
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x)
      for (int ch = 0; ch < C; ++ch)
        out.data()[static_cast<size_t>((y * box.w + x) * C + ch)] =
            u8_to_float(img.at(box.y + y, box.x + x, ch));
  return out;
}

}  // namespace cutpaste
