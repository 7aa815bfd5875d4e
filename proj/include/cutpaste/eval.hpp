#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutpaste/compositor.hpp"
#include "cutpaste/networks.hpp"
#include "cutpaste/png_io.hpp"
#include "cutpaste/scene.hpp"

namespace cutpaste {

// |a and b| / |a or b| over binary masks; both-empty counts as a perfect 1.
inline double iou(const Tensor& pred, const Tensor& gt) {
  if (!same_shape(pred, gt)) throw std::invalid_argument("iou: shape mismatch");
  int64_t inter = 0, uni = 0;
  const float* p = pred.data();
  const float* g = gt.data();
  for (int i = 0; i < pred.size(); ++i) {
    const bool a = p[i] > 0.5f, b = g[i] > 0.5f;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

inline double pixel_accuracy(const Tensor& pred, const Tensor& gt) {
  if (!same_shape(pred, gt))
    throw std::invalid_argument("pixel_accuracy: shape mismatch");
  int64_t same = 0;
  const float* p = pred.data();
  const float* g = gt.data();
  for (int i = 0; i < pred.size(); ++i)
    same += (p[i] > 0.5f) == (g[i] > 0.5f);
  return double(same) / double(pred.size());
}

// All pixels of the given box declared foreground.
inline Tensor box_baseline(const Image8& /*image*/, const BoundingBox& box) {
  if (!box.valid()) throw std::invalid_argument("box_baseline: degenerate box");
  return Tensor({box.h, box.w}, 1.f);
}

// A method under evaluation: 28x28 soft mask in [0,1] for one instance.
using MaskProducer = std::function<Tensor(const Scene&, const Instance&)>;

inline MaskProducer generator_producer(const GeneratorNet& gen) {
  return [&gen](const Scene& scene, const Instance& inst) {
    NoGradGuard off;
    return gen.forward(scene.image, inst.box);
  };
}

inline MaskProducer box_producer() {
  return [](const Scene&, const Instance&) {
    return Tensor({kMaskSize, kMaskSize}, 1.f);
  };
}

// Evaluation-only oracle: the ground truth downsampled to mask resolution.
inline MaskProducer ground_truth_producer() {
  return [](const Scene&, const Instance& inst) {
    Image8 mask_img(inst.box.h, inst.box.w, 1);
    for (size_t p = 0; p < inst.mask.size(); ++p)
      mask_img.data[p] = inst.mask[p] ? 255 : 0;
    return area_resample(mask_img, 0, 0, inst.box.w, inst.box.h, kMaskSize,
                         kMaskSize);
  };
}

struct InstanceScore {
  int scene = 0;
  int instance = 0;
  double iou = 0.0;
  double accuracy = 0.0;
  bool failed = false;
};

struct EvalResult {
  std::string method;
  std::vector<InstanceScore> per_instance;
  double miou = 0.0;
  double pixel_acc = 0.0;
  nlohmann::json config_echo;

  size_t n_instances() const { return per_instance.size(); }
};

// Scores a producer on every instance: predict, bicubic-upsample into the
// box, threshold, compare against ground truth over the box region (the
// ground truth is tight in its box, so the full-frame score is identical).
// A producer failure scores 0 with a flag rather than aborting the sweep.
inline EvalResult evaluate(const MaskProducer& producer, const Dataset& data,
                           const std::string& method) {
  EvalResult res;
  res.method = method;
  double iou_sum = 0.0, acc_sum = 0.0;
  for (const auto& [s, k] : data.instances) {
    const Scene& scene = data.scenes[static_cast<size_t>(s)];
    const Instance& inst = scene.instances[static_cast<size_t>(k)];
    InstanceScore score;
    score.scene = s;
    score.instance = k;
    try {
      Tensor soft = producer(scene, inst);
      Tensor pred = soft.dim(0) == inst.box.h && soft.dim(1) == inst.box.w
                        ? soft
                        : upsample_mask_for_eval(soft, inst.box);
      Tensor gt({inst.box.h, inst.box.w});
      for (int i = 0; i < inst.box.h * inst.box.w; ++i)
        gt[i] = static_cast<float>(inst.mask[static_cast<size_t>(i)]);
      score.iou = iou(pred, gt);
      score.accuracy = pixel_accuracy(pred, gt);
    } catch (const std::exception&) {
      score.failed = true;
      score.iou = 0.0;
      score.accuracy = 0.0;
    }
    iou_sum += score.iou;
    acc_sum += score.accuracy;
    res.per_instance.push_back(score);
  }
  if (!res.per_instance.empty()) {
    res.miou = iou_sum / double(res.per_instance.size());
    res.pixel_acc = acc_sum / double(res.per_instance.size());
  }
  return res;
}

// Mean soft-mask coverage over a dataset; collapse shows up as ~0 or ~1.
inline double mean_mask_coverage(const MaskProducer& producer,
                                 const Dataset& data) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& [s, k] : data.instances) {
    const Scene& scene = data.scenes[static_cast<size_t>(s)];
    const Instance& inst = scene.instances[static_cast<size_t>(k)];
    Tensor m = producer(scene, inst);
    double acc = 0.0;
    for (float v : m.values()) acc += v;
    sum += acc / m.size();
    ++n;
  }
  return n ? sum / double(n) : 0.0;
}

namespace detail {

inline std::string scene_tag(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

inline Image8 overlay_panel(const Image8& image, const BoundingBox& box,
                            const Tensor* mask) {
  Image8 out(box.h, box.w, 3);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x) {
      float rgb[3];
      for (int c = 0; c < 3; ++c)
        rgb[c] = image.at(box.y + y, box.x + x, c) / 255.f;
      if (mask && mask->at2(y, x) > 0.5f) {
        rgb[0] = 0.5f * rgb[0] + 0.5f;  // 50% red tint
        rgb[1] *= 0.5f;
        rgb[2] *= 0.5f;
      }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = quantize8(rgb[c]);
    }
  return out;
}

}  // namespace detail

// report.csv, report.json, and side-by-side overlay grids
// (image | ground truth | prediction) for the first k instances per method.
inline void emit_report(const std::vector<EvalResult>& results,
                        const Dataset& data, const std::string& out_dir,
                        const std::vector<MaskProducer>& producers = {},
                        int overlay_count = 8) {
  if (results.empty()) throw std::invalid_argument("emit_report: no results");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream csv(out_dir + "/report.csv");
    if (!csv) throw std::runtime_error("emit_report: cannot write report.csv");
    csv << "method,miou,pixel_accuracy,n_instances\n";
    for (const EvalResult& r : results) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu\n", r.method.c_str(),
                    r.miou, r.pixel_acc, r.n_instances());
      csv << buf;
    }
  }

  {
    nlohmann::json j = nlohmann::json::array();
    for (const EvalResult& r : results) {
      nlohmann::json inst = nlohmann::json::array();
      for (const InstanceScore& s : r.per_instance)
        inst.push_back({{"scene", s.scene},
                        {"instance", s.instance},
                        {"iou", s.iou},
                        {"accuracy", s.accuracy},
                        {"failed", s.failed}});
      j.push_back({{"method", r.method},
                   {"miou", r.miou},
                   {"pixel_accuracy", r.pixel_acc},
                   {"config", r.config_echo},
                   {"per_instance", inst}});
    }
    std::ofstream js(out_dir + "/report.json");
    js << j.dump(2) << "\n";
  }

  if (producers.empty()) return;
  fs::create_directories(out_dir + "/overlays");
  for (size_t m = 0; m < producers.size() && m < results.size(); ++m) {
    int emitted = 0;
    for (const auto& [s, k] : data.instances) {
      if (emitted >= overlay_count) break;
      const Scene& scene = data.scenes[static_cast<size_t>(s)];
      const Instance& inst = scene.instances[static_cast<size_t>(k)];

      Tensor gt({inst.box.h, inst.box.w});
      for (int i = 0; i < inst.box.h * inst.box.w; ++i)
        gt[i] = static_cast<float>(inst.mask[static_cast<size_t>(i)]);
      Tensor soft = producers[m](scene, inst);
      Tensor pred = soft.dim(0) == inst.box.h && soft.dim(1) == inst.box.w
                        ? soft
                        : upsample_mask_for_eval(soft, inst.box);

      Image8 plain = detail::overlay_panel(scene.image, inst.box, nullptr);
      Image8 gt_panel = detail::overlay_panel(scene.image, inst.box, &gt);
      Image8 pred_panel = detail::overlay_panel(scene.image, inst.box, &pred);
      Image8 grid(inst.box.h, 3 * inst.box.w, 3);
      for (int y = 0; y < inst.box.h; ++y)
        for (int x = 0; x < inst.box.w; ++x)
          for (int c = 0; c < 3; ++c) {
            grid.at(y, x, c) = plain.at(y, x, c);
            grid.at(y, x + inst.box.w, c) = gt_panel.at(y, x, c);
            grid.at(y, x + 2 * inst.box.w, c) = pred_panel.at(y, x, c);
          }
      write_png(out_dir + "/overlays/" + results[m].method + "_" +
                    detail::scene_tag(s) + "_" + std::to_string(k) + ".png",
                grid);
      ++emitted;
    }
  }
}

}  // namespace cutpaste
