#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cutpaste/scene.hpp"

namespace cutpaste {

enum class PastePolicy { uniform, scanline };
enum class PasteSource { same_image, other_image };
enum class CompositeResolution { mask, x2 };
enum class CutLossVariant { both_terms, fake_only };

inline const char* paste_policy_name(PastePolicy p) {
  return p == PastePolicy::uniform ? "uniform" : "scanline";
}
inline const char* paste_source_name(PasteSource s) {
  return s == PasteSource::same_image ? "same_image" : "other_image";
}
inline const char* composite_resolution_name(CompositeResolution r) {
  return r == CompositeResolution::mask ? "mask" : "2x";
}
inline const char* cut_loss_variant_name(CutLossVariant v) {
  return v == CutLossVariant::both_terms ? "both_terms" : "fake_only";
}

struct TrainConfig {
  float w_cls = 0.f;
  float w_cut = 0.f;
  float lr = 5e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  int gen_batch = 4;
  int disc_batch = 8;  // half real, half fake
  int steps = 20000;
  PastePolicy paste_policy = PastePolicy::uniform;
  PasteSource paste_source = PasteSource::same_image;
  bool flip_augment = true;
  CompositeResolution composite_resolution = CompositeResolution::mask;
  bool viewport_padding = true;
  CutLossVariant cut_loss_variant = CutLossVariant::both_terms;
  int pretrain_cls_steps = 2000;
  int gen_channels = 32;
  int disc_channels = 32;  // first stage width; later stages double
  int checkpoint_every = 5000;
  uint64_t seed = 1;
  bool deterministic = true;
  std::string data_dir;
  std::string eval_data_dir;

  void validate() const {
    if (w_cls < 0.f || w_cut < 0.f || !std::isfinite(w_cls) || !std::isfinite(w_cut))
      throw std::invalid_argument("config: loss weights must be finite and >= 0");
    if (lr <= 0.f) throw std::invalid_argument("config: lr must be positive");
    if (gen_batch < 1) throw std::invalid_argument("config: gen_batch must be >= 1");
    if (disc_batch < 2 || disc_batch % 2 != 0)
      throw std::invalid_argument("config: disc_batch must be even (half real, half fake)");
    if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    if (gen_channels < 8) throw std::invalid_argument("config: gen_channels must be >= 8");
    if (disc_channels < 8) throw std::invalid_argument("config: disc_channels must be >= 8");
    if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
  }
};

// --- flat JSON (de)serialization; keys mirror the field names exactly ------

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"image_size", c.image_size},
          {"min_instances", c.min_instances},
          {"max_instances", c.max_instances},
          {"min_scale", c.min_scale},
          {"max_scale", c.max_scale},
          {"w_ellipse", c.w_ellipse},
          {"w_rectangle", c.w_rectangle},
          {"w_polygon", c.w_polygon},
          {"w_blob", c.w_blob},
          {"background", c.background},
          {"texture_contrast", c.texture_contrast},
          {"object_contrast", c.object_contrast},
          {"depth_scale", c.depth_scale},
          {"shadows", c.shadows},
          {"n_scenes", c.n_scenes},
          {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.min_instances = j.value("min_instances", c.min_instances);
  c.max_instances = j.value("max_instances", c.max_instances);
  c.min_scale = j.value("min_scale", c.min_scale);
  c.max_scale = j.value("max_scale", c.max_scale);
  c.w_ellipse = j.value("w_ellipse", c.w_ellipse);
  c.w_rectangle = j.value("w_rectangle", c.w_rectangle);
  c.w_polygon = j.value("w_polygon", c.w_polygon);
  c.w_blob = j.value("w_blob", c.w_blob);
  c.background = j.value("background", c.background);
  c.texture_contrast = j.value("texture_contrast", c.texture_contrast);
  c.object_contrast = j.value("object_contrast", c.object_contrast);
  c.depth_scale = j.value("depth_scale", c.depth_scale);
  c.shadows = j.value("shadows", c.shadows);
  c.n_scenes = j.value("n_scenes", c.n_scenes);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"w_cls", c.w_cls},
          {"w_cut", c.w_cut},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"gen_batch", c.gen_batch},
          {"disc_batch", c.disc_batch},
          {"steps", c.steps},
          {"paste_policy", paste_policy_name(c.paste_policy)},
          {"paste_source", paste_source_name(c.paste_source)},
          {"flip_augment", c.flip_augment},
          {"composite_resolution", composite_resolution_name(c.composite_resolution)},
          {"viewport_padding", c.viewport_padding},
          {"cut_loss_variant", cut_loss_variant_name(c.cut_loss_variant)},
          {"pretrain_cls_steps", c.pretrain_cls_steps},
          {"gen_channels", c.gen_channels},
          {"disc_channels", c.disc_channels},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"data_dir", c.data_dir},
          {"eval_data_dir", c.eval_data_dir}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.w_cls = j.value("w_cls", c.w_cls);
  c.w_cut = j.value("w_cut", c.w_cut);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.gen_batch = j.value("gen_batch", c.gen_batch);
  c.disc_batch = j.value("disc_batch", c.disc_batch);
  c.steps = j.value("steps", c.steps);
  {
    const std::string p = j.value("paste_policy", "uniform");
    if (p == "uniform") c.paste_policy = PastePolicy::uniform;
    else if (p == "scanline") c.paste_policy = PastePolicy::scanline;
    else throw std::invalid_argument("config: unknown paste_policy '" + p + "'");
  }
  {
    const std::string s = j.value("paste_source", "same_image");
    if (s == "same_image") c.paste_source = PasteSource::same_image;
    else if (s == "other_image") c.paste_source = PasteSource::other_image;
    else throw std::invalid_argument("config: unknown paste_source '" + s + "'");
  }
  c.flip_augment = j.value("flip_augment", c.flip_augment);
  {
    const std::string r = j.value("composite_resolution", "mask");
    if (r == "mask") c.composite_resolution = CompositeResolution::mask;
    else if (r == "2x") c.composite_resolution = CompositeResolution::x2;
    else throw std::invalid_argument("config: unknown composite_resolution '" + r + "'");
  }
  c.viewport_padding = j.value("viewport_padding", c.viewport_padding);
  {
    const std::string v = j.value("cut_loss_variant", "both_terms");
    if (v == "both_terms") c.cut_loss_variant = CutLossVariant::both_terms;
    else if (v == "fake_only") c.cut_loss_variant = CutLossVariant::fake_only;
    else throw std::invalid_argument("config: unknown cut_loss_variant '" + v + "'");
  }
  c.pretrain_cls_steps = j.value("pretrain_cls_steps", c.pretrain_cls_steps);
  c.gen_channels = j.value("gen_channels", c.gen_channels);
  c.disc_channels = j.value("disc_channels", c.disc_channels);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.data_dir = j.value("data_dir", c.data_dir);
  c.eval_data_dir = j.value("eval_data_dir", c.eval_data_dir);
  c.validate();
  return c;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

inline void save_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace cutpaste
