#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutpaste/box.hpp"
#include "cutpaste/image.hpp"
#include "cutpaste/rng.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {

enum class ShapeKind { ellipse, rectangle, polygon, blob };

inline const char* shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::polygon: return "polygon";
    case ShapeKind::blob: return "blob";
  }
  return "?";
}

inline ShapeKind shape_kind_from_name(const std::string& s) {
  if (s == "ellipse") return ShapeKind::ellipse;
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "polygon") return ShapeKind::polygon;
  if (s == "blob") return ShapeKind::blob;
  throw std::invalid_argument("unknown shape kind '" + s + "'");
}

struct SynthConfig {
  int image_size = 128;
  int min_instances = 2;
  int max_instances = 6;
  float min_scale = 0.12f;  // object width as fraction of image width
  float max_scale = 0.28f;
  float w_ellipse = 0.5f;   // shape mix weights
  float w_rectangle = 0.f;
  float w_polygon = 0.f;
  float w_blob = 0.5f;
  std::string background = "noise";  // noise | stripes
  float texture_contrast = 0.5f;     // background texture amplitude
  float object_contrast = 0.4f;      // min fill-vs-background colour distance
  bool depth_scale = false;          // object scale grows with y
  bool shadows = false;
  int n_scenes = 2000;
  uint64_t seed = 1;

  // Mirrors the dataset filtering thresholds: smallest side >= 14 px and
  // width at most 30% of image width so a paste destination always exists.
  void validate() const {
    if (image_size < 48) throw std::invalid_argument("synth: image_size too small");
    if (min_instances < 1 || max_instances < min_instances)
      throw std::invalid_argument("synth: bad instance count range");
    if (min_scale * image_size < 14.f)
      throw std::invalid_argument("synth: min object side below 14 px");
    if (max_scale > 0.30f)
      throw std::invalid_argument("synth: max object width above 30% of image width");
    if (min_scale > max_scale) throw std::invalid_argument("synth: scale range inverted");
    if (w_ellipse + w_rectangle + w_polygon + w_blob <= 0.f)
      throw std::invalid_argument("synth: empty shape mix");
    if (background != "noise" && background != "stripes")
      throw std::invalid_argument("synth: unknown background family '" + background + "'");
    if (n_scenes < 1) throw std::invalid_argument("synth: n_scenes must be positive");
  }
};

struct Instance {
  BoundingBox box;
  std::vector<uint8_t> mask;  // box.h x box.w, values 0/1, tight in box
  ShapeKind kind = ShapeKind::ellipse;
  uint64_t appearance_seed = 0;

  uint8_t mask_at(int y, int x) const {
    return mask[static_cast<size_t>(y) * box.w + x];
  }
  int mask_area() const {
    int n = 0;
    for (uint8_t v : mask) n += v;
    return n;
  }

  bool operator==(const Instance&) const = default;
};

struct Scene {
  int index = 0;
  Image8 image;
  std::vector<Instance> instances;

  bool operator==(const Scene&) const = default;
};

struct Dataset {
  std::vector<Scene> scenes;
  SynthConfig config;

  // Flat (scene, instance) index for uniform instance sampling.
  std::vector<std::pair<int, int>> instances;

  void rebuild_index() {
    instances.clear();
    for (size_t s = 0; s < scenes.size(); ++s)
      for (size_t k = 0; k < scenes[s].instances.size(); ++k)
        instances.emplace_back(static_cast<int>(s), static_cast<int>(k));
  }
  size_t instance_count() const { return instances.size(); }
};

// Minimal axis-aligned box enclosing all set pixels of a full-frame mask.
inline BoundingBox tight_bbox(const Tensor& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("tight_bbox: mask must be 2-d");
  const int H = mask.dim(0), W = mask.dim(1);
  int x0 = W, y0 = H, x1 = -1, y1 = -1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (mask.at2(y, x) > 0.5f) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw std::invalid_argument("tight_bbox: empty mask");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

// Full-frame {0,1} float mask for one instance.
inline Tensor instance_mask_full(const Scene& scene, int k) {
  const Instance& inst = scene.instances.at(static_cast<size_t>(k));
  Tensor full({scene.image.h, scene.image.w});
  for (int y = 0; y < inst.box.h; ++y)
    for (int x = 0; x < inst.box.w; ++x)
      full.at2(inst.box.y + y, inst.box.x + x) =
          static_cast<float>(inst.mask_at(y, x));
  return full;
}

namespace detail {

// Binary mask of a shape rasterized into a nominal w x h box (pixel-centre
// tests), then trimmed to its tight extents.
struct RasterShape {
  int w = 0, h = 0;
  std::vector<uint8_t> mask;
};

inline RasterShape trim_raster(int w, int h, const std::vector<uint8_t>& m) {
  int x0 = w, y0 = h, x1 = -1, y1 = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m[static_cast<size_t>(y) * w + x]) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  RasterShape out;
  if (x1 < 0) return out;
  out.w = x1 - x0 + 1;
  out.h = y1 - y0 + 1;
  out.mask.resize(static_cast<size_t>(out.w) * out.h);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out.mask[static_cast<size_t>(y) * out.w + x] =
          m[static_cast<size_t>(y + y0) * w + (x + x0)];
  return out;
}

inline RasterShape raster_shape(ShapeKind kind, int w, int h, Rng& rng) {
  std::vector<uint8_t> m(static_cast<size_t>(w) * h, 0);
  const double cx = w / 2.0, cy = h / 2.0;
  const double ax = w / 2.0, ay = h / 2.0;

  switch (kind) {
    case ShapeKind::rectangle: {
      std::fill(m.begin(), m.end(), uint8_t{1});
      break;
    }
    case ShapeKind::ellipse: {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dx = (x + 0.5 - cx) / ax, dy = (y + 0.5 - cy) / ay;
          if (dx * dx + dy * dy <= 1.0) m[static_cast<size_t>(y) * w + x] = 1;
        }
      break;
    }
    case ShapeKind::polygon: {
      const int k = 5 + rng.below(4);
      std::vector<double> px(static_cast<size_t>(k)), py(static_cast<size_t>(k));
      double rmax = 0.0;
      std::vector<double> radii(static_cast<size_t>(k));
      for (int i = 0; i < k; ++i) {
        radii[static_cast<size_t>(i)] = 0.75 + 0.25 * rng.uniform();
        rmax = std::max(rmax, radii[static_cast<size_t>(i)]);
      }
      const double phase = rng.uniform() * 2.0 * 3.14159265358979323846;
      for (int i = 0; i < k; ++i) {
        const double th = phase + 2.0 * 3.14159265358979323846 * i / k;
        const double r = radii[static_cast<size_t>(i)] / rmax;
        px[static_cast<size_t>(i)] = cx + ax * r * std::cos(th);
        py[static_cast<size_t>(i)] = cy + ay * r * std::sin(th);
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          // even-odd rule
          const double qx = x + 0.5, qy = y + 0.5;
          bool in = false;
          for (int i = 0, j = k - 1; i < k; j = i++) {
            const double xi = px[size_t(i)], yi = py[size_t(i)];
            const double xj = px[size_t(j)], yj = py[size_t(j)];
            if ((yi > qy) != (yj > qy) &&
                qx < (xj - xi) * (qy - yi) / (yj - yi) + xi)
              in = !in;
          }
          if (in) m[static_cast<size_t>(y) * w + x] = 1;
        }
      break;
    }
    case ShapeKind::blob: {
      // star-convex radial profile r(theta) = 1 + sum a_k cos(k theta + phi_k)
      double a[3], phi[3];
      for (int i = 0; i < 3; ++i) {
        a[i] = rng.uniform(0.05f, 0.22f) / (i + 1);
        phi[i] = rng.uniform() * 2.0 * 3.14159265358979323846;
      }
      double fmax = 0.0;
      for (int t = 0; t < 256; ++t) {
        const double th = 2.0 * 3.14159265358979323846 * t / 256;
        double f = 1.0;
        for (int i = 0; i < 3; ++i) f += a[i] * std::cos((i + 2) * th + phi[i]);
        fmax = std::max(fmax, f);
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dx = (x + 0.5 - cx) / ax, dy = (y + 0.5 - cy) / ay;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double th = std::atan2(dy, dx);
          double f = 1.0;
          for (int i = 0; i < 3; ++i) f += a[i] * std::cos((i + 2) * th + phi[i]);
          if (r <= f / fmax) m[static_cast<size_t>(y) * w + x] = 1;
        }
      break;
    }
  }
  return trim_raster(w, h, m);
}

// Smooth random field from a coarse lattice, bicubic-upsampled.
inline Tensor noise_field(int size, int lattice, float amplitude, Rng& rng) {
  Tensor coarse({lattice, lattice});
  for (float& v : coarse.values()) v = amplitude * (2.f * rng.uniform() - 1.f);
  return bicubic_resize(coarse, size, size);
}

inline void render_background(Image8& img, const SynthConfig& cfg, Rng& rng) {
  const int S = cfg.image_size;
  float base[3];
  for (float& b : base) b = rng.uniform(0.3f, 0.7f);
  const float amp = cfg.texture_contrast;

  Tensor field({S, S, 3});
  if (cfg.background == "noise") {
    for (int ch = 0; ch < 3; ++ch) {
      Tensor low = noise_field(S, 5, 0.45f * amp, rng);
      Tensor mid = noise_field(S, 13, 0.22f * amp, rng);
      for (int p = 0; p < S * S; ++p)
        field.data()[static_cast<size_t>(p) * 3 + ch] =
            base[ch] + low.data()[p] + mid.data()[p];
    }
  } else {  // stripes
    const double th = rng.uniform() * 3.14159265358979323846;
    const double freq = rng.uniform(0.06f, 0.14f);
    const double cth = std::cos(th), sth = std::sin(th);
    float cols[2][3];
    for (int i = 0; i < 2; ++i)
      for (int ch = 0; ch < 3; ++ch)
        cols[i][ch] = std::clamp(base[ch] + amp * (2.f * rng.uniform() - 1.f) * 0.5f,
                                 0.05f, 0.95f);
    Tensor warp = noise_field(S, 7, 2.5f, rng);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double t = 0.5 + 0.5 * std::sin(2.0 * 3.14159265358979323846 * freq *
                                                  (x * cth + y * sth) +
                                              warp.at2(y, x));
        for (int ch = 0; ch < 3; ++ch)
          field.at3(y, x, ch) =
              static_cast<float>((1.0 - t) * cols[0][ch] + t * cols[1][ch]);
      }
  }

  // fine per-pixel grain
  for (float& v : field.values())
    v += 0.06f * amp * (2.f * rng.uniform() - 1.f);

  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = quantize8(field.at3(y, x, ch));
}

inline float color_distance(const float a[3], const float b[3]) {
  float d = 0.f;
  for (int i = 0; i < 3; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

inline void render_instance(Image8& img, const Instance& inst,
                            const SynthConfig& cfg) {
  Rng rng(inst.appearance_seed);
  const BoundingBox& b = inst.box;

  float bg_mean[3] = {0.f, 0.f, 0.f};
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        bg_mean[ch] += img.at(b.y + y, b.x + x, ch) / 255.f;
  for (float& v : bg_mean) v /= static_cast<float>(b.w * b.h);

  float fill[3];
  float best[3] = {0.f, 0.f, 0.f};
  float best_d = -1.f;
  for (int attempt = 0; attempt < 50; ++attempt) {
    for (float& v : fill) v = rng.uniform(0.08f, 0.92f);
    const float d = color_distance(fill, bg_mean);
    if (d > best_d) {
      best_d = d;
      std::copy(fill, fill + 3, best);
    }
    if (d >= cfg.object_contrast) break;
  }
  std::copy(best, best + 3, fill);

  if (cfg.shadows) {
    const int sdx = 3, sdy = 4;
    for (int y = 0; y < b.h; ++y)
      for (int x = 0; x < b.w; ++x) {
        if (!inst.mask_at(y, x)) continue;
        const int sy = b.y + y + sdy, sx = b.x + x + sdx;
        if (sy >= img.h || sx >= img.w) continue;
        const int ly = sy - b.y, lx = sx - b.x;
        if (ly < b.h && lx < b.w && inst.mask_at(ly, lx)) continue;
        for (int ch = 0; ch < 3; ++ch)
          img.at(sy, sx, ch) = static_cast<uint8_t>(img.at(sy, sx, ch) * 0.55f);
      }
  }

  const float tex_amp = 0.10f + 0.1f * rng.uniform();
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x) {
      if (!inst.mask_at(y, x)) continue;
      bool rim = y == 0 || x == 0 || y == b.h - 1 || x == b.w - 1 ||
                 !inst.mask_at(y - 1, x) || !inst.mask_at(y + 1, x) ||
                 !inst.mask_at(y, x - 1) || !inst.mask_at(y, x + 1);
      const float grain = tex_amp * (2.f * rng.uniform() - 1.f);
      for (int ch = 0; ch < 3; ++ch) {
        float v = fill[ch] + grain;
        if (rim) v *= 0.6f;
        img.at(b.y + y, b.x + x, ch) = quantize8(v);
      }
    }
}

}  // namespace detail

// Margin keeping a 3/28 context band of the largest object inside the image.
inline int scene_margin(const SynthConfig& cfg) {
  return static_cast<int>(
             std::ceil(3.0 / 28.0 * cfg.max_scale * cfg.image_size)) + 1;
}

// Deterministic in (config.seed, index); boxes are pairwise disjoint with a
// 2 px gap and stay scene_margin() away from the image border.
inline Scene generate_scene(const SynthConfig& cfg, int index) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(index));

  Scene scene;
  scene.index = index;
  scene.image = Image8(cfg.image_size, cfg.image_size, 3);
  detail::render_background(scene.image, cfg, rng);

  const int S = cfg.image_size;
  const int margin = scene_margin(cfg);
  const int target = cfg.min_instances +
                     rng.below(cfg.max_instances - cfg.min_instances + 1);
  const float wsum = cfg.w_ellipse + cfg.w_rectangle + cfg.w_polygon + cfg.w_blob;

  const int min_side = 14;
  const int max_w = static_cast<int>(cfg.max_scale * S);

  while (static_cast<int>(scene.instances.size()) < target) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      float pick = rng.uniform() * wsum;
      ShapeKind kind = ShapeKind::blob;
      if ((pick -= cfg.w_ellipse) < 0) kind = ShapeKind::ellipse;
      else if ((pick -= cfg.w_rectangle) < 0) kind = ShapeKind::rectangle;
      else if ((pick -= cfg.w_polygon) < 0) kind = ShapeKind::polygon;

      // vertical position first so depth-correlated scale can depend on it
      const float yfrac = rng.uniform();
      float sfrac;
      if (cfg.depth_scale) {
        sfrac = std::clamp(0.9f * yfrac + 0.1f * rng.uniform(), 0.f, 1.f);
      } else {
        sfrac = rng.uniform();
      }
      int w = static_cast<int>(std::lround(
          cfg.min_scale * S + sfrac * (cfg.max_scale * S - cfg.min_scale * S)));
      const float aspect = cfg.depth_scale ? rng.uniform(0.9f, 1.1f)
                                           : rng.uniform(0.75f, 1.3f);
      int h = std::clamp(static_cast<int>(std::lround(w * aspect)), min_side, max_w);
      w = std::clamp(w, min_side, max_w);

      const uint64_t appearance = rng.next_u64();
      Rng shape_rng(appearance);
      detail::RasterShape rs = detail::raster_shape(kind, w, h, shape_rng);
      if (rs.w < min_side || rs.h < min_side || rs.w > max_w) continue;

      if (S - 2 * margin - rs.w <= 0 || S - 2 * margin - rs.h <= 0) continue;
      const int x = margin + rng.below(S - 2 * margin - rs.w + 1);
      const int y = std::clamp(
          margin + static_cast<int>(yfrac * (S - 2 * margin - rs.h)), margin,
          S - margin - rs.h);

      BoundingBox box{x, y, rs.w, rs.h};
      BoundingBox gap{x - 2, y - 2, rs.w + 4, rs.h + 4};
      bool clash = false;
      for (const Instance& other : scene.instances)
        if (boxes_overlap(gap, other.box)) clash = true;
      if (clash) continue;

      Instance inst;
      inst.box = box;
      inst.mask = std::move(rs.mask);
      inst.kind = kind;
      inst.appearance_seed = appearance;
      detail::render_instance(scene.image, inst, cfg);
      scene.instances.push_back(std::move(inst));
      placed = true;
    }
    if (!placed) {
      if (static_cast<int>(scene.instances.size()) >= cfg.min_instances) break;
      throw std::runtime_error(
          "generate_scene: cannot place minimum instance count under the "
          "non-overlap and margin constraints (scene " + std::to_string(index) + ")");
    }
  }
  return scene;
}

inline Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.scenes.reserve(static_cast<size_t>(cfg.n_scenes));
  for (int i = 0; i < cfg.n_scenes; ++i) ds.scenes.push_back(generate_scene(cfg, i));
  ds.rebuild_index();
  return ds;
}

}  // namespace cutpaste
