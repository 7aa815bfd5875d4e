#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cutpaste/checkpoint.hpp"
#include "cutpaste/compositor.hpp"
#include "cutpaste/config.hpp"
#include "cutpaste/dataset.hpp"
#include "cutpaste/networks.hpp"
#include "cutpaste/paste.hpp"

namespace cutpaste {

struct LossReport {
  int64_t step = 0;
  float l_cpgan_d = 0.f;
  float l_cpgan_g = 0.f;
  float l_cls = 0.f;
  float l_cgan_d = 0.f;
  float l_cgan_g = 0.f;
  float total_g = 0.f;
};

inline const char* kLossLogHeader =
    "step,l_cpgan_d,l_cpgan_g,l_cls,l_cgan_d,l_cgan_g,total_g";

inline std::string loss_report_csv(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.step), r.l_cpgan_d, r.l_cpgan_g,
                r.l_cls, r.l_cgan_d, r.l_cgan_g, r.total_g);
  return buf;
}

struct TrainHooks {
  // Replaces the generator mask; used to force degenerate masks in tests.
  std::function<Tensor(const Tensor&)> mask_hook;
};

// One training sample: the real view of the source box plus the composited
// fake (and cut images when the cut loss is active), all built through the
// shared patch extraction.
struct FakeAssembly {
  Tensor real_patch;
  Tensor fake_patch;
  Tensor cut_real;
  Tensor cut_fake;
  Tensor mask;
  PastePlacement placement;
};

class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig cfg, std::string out_dir,
          TrainHooks hooks = {}, const Dataset* other_images = nullptr)
      : data_(data),
        other_(other_images),
        cfg_(std::move(cfg)),
        out_dir_(std::move(out_dir)),
        hooks_(std::move(hooks)) {
    cfg_.validate();
    if (data_.instance_count() == 0)
      throw std::invalid_argument("train: dataset has no instances");
    if (cfg_.paste_source == PasteSource::other_image && data_.scenes.size() < 2 &&
        !other_)
      throw std::invalid_argument("train: other_image pasting needs >= 2 scenes");

    adam_ = {cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.epsilon};

    Rng root(cfg_.seed);
    data_rng_ = root.fork(1);
    Rng g_init = root.fork(2);
    Rng d_init = root.fork(3);
    gen_ = build_generator(cfg_.gen_channels, g_init);
    disc_ = build_discriminator(cfg_.disc_channels, d_init);
    if (cfg_.w_cut > 0.f) {
      Rng dcut_init = root.fork(4);
      d_cut_ = build_discriminator(cfg_.disc_channels, dcut_init);
    }
  }

  // Binary object-vs-background classifier, trained before the adversarial
  // loop and frozen afterwards.
  void pretrain_classifier() {
    Rng rng = Rng(cfg_.seed).fork(5);
    d_cls_ = build_discriminator(cfg_.disc_channels, rng);
    AdamState opt;
    for (int step = 0; step < cfg_.pretrain_cls_steps; ++step) {
      std::vector<Tensor> terms;
      for (int i = 0; i < 2; ++i) {
        const auto [scene, inst] = pick_instance(rng);
        const bool flip = cfg_.flip_augment && rng.coin();
        Tensor obj = extract_patch(scene->image, inst->box);
        if (flip) obj = flip_horizontal(obj);
        terms.push_back(lsgan_g_loss(d_cls_->prob_real(obj)));  // (D-1)^2

        Tensor bg = background_patch(rng);
        terms.push_back(square(d_cls_->prob_real(bg)));  // D^2
      }
      Tensor loss = mean_of(terms);
      zero_grads(d_cls_->params);
      backward(loss);
      update_network(*d_cls_, opt, adam_);
    }
    d_cls_->frozen = true;
  }

  // Object-free patch: a random instance's box size placed by rejection
  // sampling away from every annotated box.
  Tensor background_patch(Rng& rng) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const auto [scene, inst] = pick_instance(rng);
      try {
        PastePlacement pl = sample_uniform(*scene, inst->box, rng);
        return extract_patch(scene->image, pl.box_prime);
      } catch (const placement_error&) {
        continue;
      }
    }
    throw std::runtime_error(
        "pretrain_cls: insufficient object-free space for background patches");
  }

  FakeAssembly assemble_fake(const Scene& scene, const Instance& inst,
                             Rng& rng) {
    const bool flip = cfg_.flip_augment && rng.coin();

    Tensor mask = gen_.forward(scene.image, inst.box, flip);
    if (hooks_.mask_hook) mask = hooks_.mask_hook(mask);

    const Scene* bg_scene = &scene;
    if (cfg_.paste_source == PasteSource::other_image) {
      const Dataset& pool = other_ ? *other_ : data_;
      int idx = static_cast<int>(rng.below(static_cast<int>(pool.scenes.size())));
      if (!other_ && pool.scenes.size() > 1 &&
          &pool.scenes[static_cast<size_t>(idx)] == &scene)
        idx = (idx + 1) % static_cast<int>(pool.scenes.size());
      bg_scene = &pool.scenes[static_cast<size_t>(idx)];
    }

    PastePlacement placement;
    if (cfg_.paste_policy == PastePolicy::scanline &&
        cfg_.paste_source == PasteSource::same_image) {
      placement = sample_scanline(*bg_scene, inst.box, rng);
      if (placement.used_fallback) ++scanline_fallbacks_;
    } else {
      placement = sample_uniform(*bg_scene, inst.box, rng);
    }

    FakeAssembly out;
    out.mask = mask;
    out.placement = placement;

    if (cfg_.composite_resolution == CompositeResolution::mask) {
      Tensor fg = extract_patch(scene.image, inst.box);
      Tensor bg = extract_patch(bg_scene->image, placement.box_prime);
      if (flip) {
        fg = flip_horizontal(fg);
        bg = flip_horizontal(bg);
      }
      Tensor alpha = viewport_alpha(mask, cfg_.viewport_padding);
      out.real_patch = fg;
      out.fake_patch = composite(fg, bg, alpha).values;
      if (cfg_.w_cut > 0.f) {
        auto [cr, cf] = cut_pair(fg, bg, alpha);
        out.cut_real = cr.values;
        out.cut_fake = cf.values;
      }
    } else {
      // 2x ablation: composite at twice the mask resolution, then pool back.
      // Real patches keep the single-resample path; the mismatch is the
      // point of the experiment.
      const int big = 2 * kPatchSize;
      Tensor fg2 = extract_patch(scene.image, inst.box, kContextFrac, big);
      Tensor bg2 = extract_patch(bg_scene->image, placement.box_prime,
                                 kContextFrac, big);
      Tensor fg = extract_patch(scene.image, inst.box);
      if (flip) {
        fg2 = flip_horizontal(fg2);
        bg2 = flip_horizontal(bg2);
        fg = flip_horizontal(fg);
      }
      Tensor alpha2 =
          cfg_.viewport_padding
              ? pad2d(resize_bilinear(mask, 2 * kMaskSize, 2 * kMaskSize),
                      2 * kViewportPad)
              : resize_bilinear(mask, big, big);
      out.real_patch = fg;
      out.fake_patch = avg_pool2x2(blend(fg2, bg2, alpha2));
      if (cfg_.w_cut > 0.f) {
        Tensor zeros(fg2.shape());
        out.cut_real = avg_pool2x2(blend(zeros, fg2, alpha2));
        out.cut_fake = avg_pool2x2(blend(zeros, bg2, alpha2));
      }
    }
    return out;
  }

  // min_D E[ D(F)^2 + (D(X_B)-1)^2 ]; fakes are built outside the graph so
  // no gradient can reach the generator.
  float discriminator_step() {
    const int half = cfg_.disc_batch / 2;
    std::vector<Tensor> reals, fakes;
    for (int i = 0; i < half; ++i) {
      const auto [scene, inst] = pick_instance(data_rng_);
      const bool flip = cfg_.flip_augment && data_rng_.coin();
      Tensor r = extract_patch(scene->image, inst->box);
      reals.push_back(flip ? flip_horizontal(r) : r);
    }
    {
      NoGradGuard off;
      for (int i = 0; i < half; ++i)
        fakes.push_back(sample_assembly(data_rng_).fake_patch);
    }
    std::vector<Tensor> terms;
    for (int i = 0; i < half; ++i)
      terms.push_back(lsgan_d_loss(disc_.prob_real(reals[static_cast<size_t>(i)]),
                                   disc_.prob_real(fakes[static_cast<size_t>(i)])));
    Tensor loss = mean_of(terms);
    zero_grads(disc_.params);
    backward(loss);
    update_network(disc_, opt_d_, adam_);
    return loss.item();
  }

  // Same objective for the cut discriminator on post-cut backgrounds:
  // X~_B plays the real, F~ the fake.
  float d_cut_step() {
    const int half = cfg_.disc_batch / 2;
    std::vector<Tensor> cut_reals, cut_fakes;
    {
      NoGradGuard off;
      for (int i = 0; i < half; ++i) {
        FakeAssembly fa = sample_assembly(data_rng_);
        cut_reals.push_back(fa.cut_real);
        cut_fakes.push_back(fa.cut_fake);
      }
    }
    std::vector<Tensor> terms;
    for (int i = 0; i < half; ++i)
      terms.push_back(
          lsgan_d_loss(d_cut_->prob_real(cut_reals[static_cast<size_t>(i)]),
                       d_cut_->prob_real(cut_fakes[static_cast<size_t>(i)])));
    Tensor loss = mean_of(terms);
    zero_grads(d_cut_->params);
    backward(loss);
    update_network(*d_cut_, opt_dcut_, adam_);
    return loss.item();
  }

  // Generator objective, batch-averaged:
  //   (D(F)-1)^2 + w_cls (D_CLS(F)-1)^2 + w_cut [ (D_CUT(F~)-1)^2 + D_CUT(X~_B)^2 ]
  LossReport generator_step(int64_t step) {
    if (cfg_.w_cls > 0.f && !d_cls_)
      throw std::logic_error("generator_step: classifier not pretrained");
    std::vector<Tensor> cp_terms, cls_terms, cut_terms;
    std::vector<FakeAssembly> batch;
    for (int i = 0; i < cfg_.gen_batch; ++i)
      batch.push_back(sample_assembly(data_rng_));

    // Discriminator weights take no gradient during the generator update.
    detail::ParamGradPause pause_d(disc_.params);
    std::optional<detail::ParamGradPause> pause_cls, pause_cut;
    if (d_cls_) pause_cls.emplace(d_cls_->params);
    if (d_cut_) pause_cut.emplace(d_cut_->params);

    for (FakeAssembly& fa : batch) {
      cp_terms.push_back(lsgan_g_loss(disc_.prob_real(fa.fake_patch)));
      if (cfg_.w_cls > 0.f)
        cls_terms.push_back(lsgan_g_loss(d_cls_->prob_real(fa.fake_patch)));
      if (cfg_.w_cut > 0.f) {
        Tensor t = lsgan_g_loss(d_cut_->prob_real(fa.cut_fake));
        if (cfg_.cut_loss_variant == CutLossVariant::both_terms)
          t = add(t, square(d_cut_->prob_real(fa.cut_real)));
        cut_terms.push_back(t);
      }
    }

    LossReport rep;
    rep.step = step;
    Tensor l_cp = mean_of(cp_terms);
    Tensor total = l_cp;
    rep.l_cpgan_g = l_cp.item();
    if (!cls_terms.empty()) {
      Tensor l_cls = mean_of(cls_terms);
      rep.l_cls = l_cls.item();
      total = add(total, mul_scalar(l_cls, cfg_.w_cls));
    }
    if (!cut_terms.empty()) {
      Tensor l_cut = mean_of(cut_terms);
      rep.l_cgan_g = l_cut.item();
      total = add(total, mul_scalar(l_cut, cfg_.w_cut));
    }
    rep.total_g = total.item();

    if (!std::isfinite(rep.total_g)) {
      dump_diagnostic(batch, step);
      throw std::runtime_error("train: non-finite generator loss at step " +
                               std::to_string(step) +
                               (out_dir_.empty() ? ""
                                                 : "; batch dumped under " + out_dir_));
    }

    zero_grads(gen_.params);
    backward(total);
    adam_step(gen_.params, opt_g_, adam_);
    return rep;
  }

  std::vector<LossReport> run() {
    if (cfg_.w_cls > 0.f && !d_cls_) pretrain_classifier();
    std::ofstream log;
    if (!out_dir_.empty()) {
      std::filesystem::create_directories(out_dir_);
      log.open(out_dir_ + "/loss_log.csv",
               step_ == 0 ? std::ios::out : std::ios::app);
      if (!log) throw std::runtime_error("train: cannot write loss log");
      if (log.tellp() == 0) log << kLossLogHeader << "\n";
    }

    std::vector<LossReport> reports;
    reports.reserve(static_cast<size_t>(cfg_.steps - step_));
    while (step_ < cfg_.steps) {
      ++step_;
      const float d_loss = discriminator_step();
      float dcut_loss = 0.f;
      if (d_cut_) dcut_loss = d_cut_step();
      LossReport rep = generator_step(step_);
      rep.l_cpgan_d = d_loss;
      rep.l_cgan_d = dcut_loss;
      reports.push_back(rep);
      if (log) log << loss_report_csv(rep) << "\n";

      if (!out_dir_.empty() &&
          (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.steps)) {
        log.flush();
        save_checkpoint(out_dir_ + "/checkpoint_" +
                        (step_ == cfg_.steps ? std::string("final")
                                             : std::to_string(step_)) +
                        ".bin");
      }
    }
    return reports;
  }

  // --- checkpointing -------------------------------------------------------

  static constexpr uint32_t kTrainMagic = 0x4350434B;  // "CPCK"

  void save_checkpoint(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
      ckpt::put_u32(os, kTrainMagic);
      ckpt::put_u32(os, kCheckpointVersion);
      ckpt::put_string(os, to_json(cfg_).dump());
      ckpt::put_i64(os, step_);
      ckpt::put_u64(os, data_rng_.seed());
      ckpt::put_u64(os, data_rng_.counter());
      uint32_t flags = 0;
      if (d_cls_) flags |= 1u;
      if (d_cut_) flags |= 2u;
      ckpt::put_u32(os, flags);
      ckpt::put_u32(os, static_cast<uint32_t>(gen_.channels));
      ckpt::put_params(os, gen_.params);
      ckpt::put_u32(os, static_cast<uint32_t>(disc_.base_channels));
      ckpt::put_params(os, disc_.params);
      if (d_cls_) {
        ckpt::put_u32(os, static_cast<uint32_t>(d_cls_->base_channels));
        ckpt::put_params(os, d_cls_->params);
      }
      if (d_cut_) {
        ckpt::put_u32(os, static_cast<uint32_t>(d_cut_->base_channels));
        ckpt::put_params(os, d_cut_->params);
      }
      ckpt::put_adam(os, opt_g_);
      ckpt::put_adam(os, opt_d_);
      if (d_cut_) ckpt::put_adam(os, opt_dcut_);
      if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  // Restores every piece of training state; no field of *this changes if the
  // file is unreadable or incompatible. The step budget of the constructor
  // config is kept so a resumed run can continue past the checkpoint.
  void load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    if (ckpt::get_u32(is) != kTrainMagic)
      throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = ckpt::get_u32(is);
    if (version != kCheckpointVersion)
      throw std::runtime_error("checkpoint: incompatible version " +
                               std::to_string(version));
    TrainConfig cfg = train_config_from_json(
        nlohmann::json::parse(ckpt::get_string(is)));
    const int64_t step = ckpt::get_i64(is);
    const uint64_t seed = ckpt::get_u64(is);
    const uint64_t counter = ckpt::get_u64(is);
    const uint32_t flags = ckpt::get_u32(is);

    GeneratorNet gen;
    gen.channels = static_cast<int>(ckpt::get_u32(is));
    gen.params = ckpt::get_params(is);
    DiscriminatorNet disc;
    disc.base_channels = static_cast<int>(ckpt::get_u32(is));
    disc.params = ckpt::get_params(is);
    std::optional<DiscriminatorNet> d_cls, d_cut;
    if (flags & 1u) {
      DiscriminatorNet n;
      n.base_channels = static_cast<int>(ckpt::get_u32(is));
      n.params = ckpt::get_params(is);
      n.frozen = true;
      d_cls = std::move(n);
    }
    if (flags & 2u) {
      DiscriminatorNet n;
      n.base_channels = static_cast<int>(ckpt::get_u32(is));
      n.params = ckpt::get_params(is);
      d_cut = std::move(n);
    }
    AdamState og = ckpt::get_adam(is);
    AdamState od = ckpt::get_adam(is);
    AdamState ocut;
    if (flags & 2u) ocut = ckpt::get_adam(is);

    cfg.steps = cfg_.steps;
    cfg_ = std::move(cfg);
    step_ = step;
    data_rng_.restore(seed, counter);
    gen_ = std::move(gen);
    disc_ = std::move(disc);
    d_cls_ = std::move(d_cls);
    d_cut_ = std::move(d_cut);
    opt_g_ = std::move(og);
    opt_d_ = std::move(od);
    opt_dcut_ = std::move(ocut);
  }

  const GeneratorNet& generator() const { return gen_; }
  GeneratorNet& generator() { return gen_; }
  const DiscriminatorNet& discriminator() const { return disc_; }
  DiscriminatorNet& discriminator() { return disc_; }
  const DiscriminatorNet* classifier() const {
    return d_cls_ ? &*d_cls_ : nullptr;
  }
  const DiscriminatorNet* cut_discriminator() const {
    return d_cut_ ? &*d_cut_ : nullptr;
  }
  const TrainConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  int skipped_instances() const { return skipped_; }
  int scanline_fallbacks() const { return scanline_fallbacks_; }
  Rng& data_rng() { return data_rng_; }

 private:
  std::pair<const Scene*, const Instance*> pick_instance(Rng& rng) const {
    const auto& [s, k] =
        data_.instances[static_cast<size_t>(rng.below(static_cast<int>(data_.instance_count())))];
    const Scene& scene = data_.scenes[static_cast<size_t>(s)];
    return {&scene, &scene.instances[static_cast<size_t>(k)]};
  }

  // Draws instances until one admits a placement; a skip rate above 10%
  // means the dataset and paste policy are mismatched, so fail fast.
  FakeAssembly sample_assembly(Rng& rng) {
    for (;;) {
      const auto [scene, inst] = pick_instance(rng);
      ++attempts_;
      try {
        return assemble_fake(*scene, *inst, rng);
      } catch (const placement_error&) {
        ++skipped_;
        if (attempts_ >= 100 && 10 * skipped_ > attempts_)
          throw std::runtime_error(
              "train: placement skip rate above 10%; shrink max_scale or use "
              "fewer/smaller instances per scene");
      }
    }
  }

  void dump_diagnostic(const std::vector<FakeAssembly>& batch, int64_t step) {
    if (out_dir_.empty()) return;
    std::filesystem::create_directories(out_dir_);
    const std::string path =
        out_dir_ + "/diagnostic_step" + std::to_string(step) + ".bin";
    std::ofstream os(path, std::ios::binary);
    ckpt::put_u32(os, static_cast<uint32_t>(batch.size()));
    for (const FakeAssembly& fa : batch) {
      ckpt::put_floats(os, fa.real_patch.values());
      ckpt::put_floats(os, fa.fake_patch.values());
      ckpt::put_floats(os, fa.mask.values());
    }
  }

  const Dataset& data_;
  const Dataset* other_ = nullptr;
  TrainConfig cfg_;
  std::string out_dir_;
  TrainHooks hooks_;
  AdamConfig adam_;

  Rng data_rng_;
  GeneratorNet gen_;
  DiscriminatorNet disc_;
  std::optional<DiscriminatorNet> d_cls_;
  std::optional<DiscriminatorNet> d_cut_;
  AdamState opt_g_, opt_d_, opt_dcut_;
  int64_t step_ = 0;
  int64_t attempts_ = 0;
  int skipped_ = 0;
  int scanline_fallbacks_ = 0;
};

// Same architecture and optimizer trained with cross-entropy against the
// ground-truth mask, area-downsampled to 28x28. The weakly supervised run is
// compared against this at an identical step budget.
struct SupervisedResult {
  GeneratorNet gen;
  std::vector<std::pair<int64_t, float>> log;  // (step, bce)
};

inline SupervisedResult train_supervised(const Dataset& data, TrainConfig cfg,
                                         const std::string& out_dir = {}) {
  cfg.validate();
  if (data.instance_count() == 0)
    throw std::invalid_argument("train_supervised: dataset has no instances");
  Rng root(cfg.seed);
  Rng data_rng = root.fork(1);
  Rng g_init = root.fork(2);
  SupervisedResult out;
  out.gen = build_generator(cfg.gen_channels, g_init);
  AdamState opt;
  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon};

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/loss_log.csv");
    log << "step,bce\n";
  }

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<Tensor> terms;
    for (int i = 0; i < cfg.gen_batch; ++i) {
      const auto& [s, k] = data.instances[static_cast<size_t>(
          data_rng.below(static_cast<int>(data.instance_count())))];
      const Scene& scene = data.scenes[static_cast<size_t>(s)];
      const Instance& inst = scene.instances[static_cast<size_t>(k)];
      const bool flip = cfg.flip_augment && data_rng.coin();

      Image8 mask_img(inst.box.h, inst.box.w, 1);
      for (size_t p = 0; p < inst.mask.size(); ++p)
        mask_img.data[p] = inst.mask[p] ? 255 : 0;
      Tensor target = area_resample(mask_img, 0, 0, inst.box.w, inst.box.h,
                                    kMaskSize, kMaskSize);
      if (flip) target = flip_horizontal(target);

      Tensor mask = out.gen.forward(scene.image, inst.box, flip);
      terms.push_back(binary_cross_entropy(mask, target));
    }
    Tensor loss = mean_of(terms);
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("train_supervised: non-finite loss");
    zero_grads(out.gen.params);
    backward(loss);
    adam_step(out.gen.params, opt, adam);
    out.log.emplace_back(step, loss.item());
    if (log) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%lld,%.9g\n",
                    static_cast<long long>(step), loss.item());
      log << buf;
    }
  }
  if (!out_dir.empty()) save_generator(out_dir + "/generator_final.bin", out.gen);
  return out;
}

}  // namespace cutpaste
