#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "cutpaste/checkpoint.hpp"
#include "cutpaste/compositor.hpp"
#include "cutpaste/gradcheck.hpp"
#include "cutpaste/image.hpp"
#include "cutpaste/ops.hpp"
#include "cutpaste/optim.hpp"
#include "cutpaste/scene.hpp"

namespace cutpaste {

constexpr int kGeneratorInput = 56;  // box crop is resized to 56x56x3

namespace detail {

inline void expect_shape(const Tensor& t, const Shape& want, const char* where) {
  if (t.shape() != want)
    throw std::runtime_error(std::string("shape chain violated at ") + where +
                             ": got " + shape_str(t.shape()) + ", want " +
                             shape_str(want));
}

}  // namespace detail

// Mask head on top of a small trainable encoder. The head keeps the
// 7x7 -> 14x14 -> 28x28 schedule and layer order of the mask-prediction
// column; the encoder replaces pretrained detector features with three
// stride-2 convolutions over a 56x56 box crop.
struct GeneratorNet {
  int channels = 32;  // head width; encoder ramps up to it
  ParamSet params;

  Tensor forward_from_crop(const Tensor& crop) const {
    detail::expect_shape(crop, {kGeneratorInput, kGeneratorInput, 3}, "generator input");
    const int C = channels;
    auto p = [&](const char* name) -> const Tensor& {
      return params.at(name);
    };
    Tensor f = relu(conv2d(crop, p("enc1.w"), p("enc1.b"), 2, Padding::same));
    detail::expect_shape(f, {28, 28, std::max(8, C / 4)}, "enc1");
    f = relu(conv2d(f, p("enc2.w"), p("enc2.b"), 2, Padding::same));
    detail::expect_shape(f, {14, 14, std::max(8, C / 2)}, "enc2");
    f = relu(conv2d(f, p("enc3.w"), p("enc3.b"), 2, Padding::same));
    detail::expect_shape(f, {7, 7, C}, "enc3");

    f = relu(conv2d(f, p("head1.w"), p("head1.b"), 1, Padding::same));
    detail::expect_shape(f, {7, 7, C}, "head1 (1x1)");
    f = relu(conv2d(f, p("head2.w"), p("head2.b"), 1, Padding::same));
    detail::expect_shape(f, {7, 7, C}, "head2");
    f = bilinear_upsample(f);
    f = relu(conv2d(f, p("head3.w"), p("head3.b"), 1, Padding::same));
    detail::expect_shape(f, {14, 14, C}, "head3");
    f = bilinear_upsample(f);
    f = relu(conv2d(f, p("head4.w"), p("head4.b"), 1, Padding::same));
    detail::expect_shape(f, {28, 28, C}, "head4");
    f = conv2d(f, p("mask.w"), p("mask.b"), 1, Padding::same);
    detail::expect_shape(f, {28, 28, 1}, "mask conv");
    return reshape(sigmoid(f), {kMaskSize, kMaskSize});
  }

  // Crop the tight box (no context), resize to 56x56, predict the mask.
  Tensor forward(const Image8& image, const BoundingBox& box,
                 bool flip = false) const {
    Tensor crop = crop_to_float(image, box);
    if (flip) crop = flip_horizontal(crop);
    return forward_from_crop(resize_bilinear(crop, kGeneratorInput, kGeneratorInput));
  }
};

// Four valid convolutions (34->32->15->7->3), flatten, 2-way softmax head.
// base_channels = 64 reproduces the printed 64/128/256/512 widths and the
// 4608-long flatten.
struct DiscriminatorNet {
  int base_channels = 64;
  bool frozen = false;
  ParamSet params;

  Tensor logits(const Tensor& patch) const {
    detail::expect_shape(patch, {kPatchSize, kPatchSize, 3}, "discriminator input");
    for (float v : patch.values())
      if (!(v >= -1e-3f && v <= 1.f + 1e-3f))
        throw std::invalid_argument("discriminator: patch values outside [0,1]");
    const int b = base_channels;
    auto p = [&](const char* name) -> const Tensor& {
      return params.at(name);
    };
    Tensor f = leaky_relu(conv2d(patch, p("conv1.w"), p("conv1.b"), 1, Padding::valid));
    detail::expect_shape(f, {32, 32, b}, "conv1");
    f = leaky_relu(conv2d(f, p("conv2.w"), p("conv2.b"), 2, Padding::valid));
    detail::expect_shape(f, {15, 15, 2 * b}, "conv2");
    f = leaky_relu(conv2d(f, p("conv3.w"), p("conv3.b"), 2, Padding::valid));
    detail::expect_shape(f, {7, 7, 4 * b}, "conv3");
    f = leaky_relu(conv2d(f, p("conv4.w"), p("conv4.b"), 2, Padding::valid));
    detail::expect_shape(f, {3, 3, 8 * b}, "conv4");
    return fully_connected(flatten(f), p("fc.w"), p("fc.b"));
  }

  int flatten_length() const { return 3 * 3 * 8 * base_channels; }

  // Softmax probability of the "real" class: the scalar D(.) in all LSGAN
  // terms.
  Tensor prob_real(const Tensor& patch) const {
    return at(softmax(logits(patch)), 1);
  }
};

inline GeneratorNet build_generator(int channels, Rng& rng) {
  if (channels < 8)
    throw std::invalid_argument("build_generator: channels must be >= 8");
  GeneratorNet net;
  net.channels = channels;
  const int C = channels;
  const int e1 = std::max(8, C / 4), e2 = std::max(8, C / 2);
  auto conv = [&](const char* name, int k, int cin, int cout) {
    add_param(net.params, std::string(name) + ".w", xavier_init({k, k, cin, cout}, rng));
    add_param(net.params, std::string(name) + ".b", Tensor({cout}));
  };
  conv("enc1", 3, 3, e1);
  conv("enc2", 3, e1, e2);
  conv("enc3", 3, e2, C);
  conv("head1", 1, C, C);
  conv("head2", 3, C, C);
  conv("head3", 3, C, C);
  conv("head4", 3, C, C);
  conv("mask", 3, C, 1);

  // dry run: any transcription slip trips the per-stage shape asserts
  NoGradGuard off;
  Tensor probe({kGeneratorInput, kGeneratorInput, 3});
  Tensor mask = net.forward_from_crop(probe);
  detail::expect_shape(mask, {kMaskSize, kMaskSize}, "generator output");
  return net;
}

inline DiscriminatorNet build_discriminator(int base_channels, Rng& rng) {
  if (base_channels < 8)
    throw std::invalid_argument("build_discriminator: base_channels must be >= 8");
  DiscriminatorNet net;
  net.base_channels = base_channels;
  const int b = base_channels;
  auto conv = [&](const char* name, int cin, int cout) {
    add_param(net.params, std::string(name) + ".w", xavier_init({3, 3, cin, cout}, rng));
    add_param(net.params, std::string(name) + ".b", Tensor({cout}));
  };
  conv("conv1", 3, b);
  conv("conv2", b, 2 * b);
  conv("conv3", 2 * b, 4 * b);
  conv("conv4", 4 * b, 8 * b);
  add_param(net.params, "fc.w", xavier_init({net.flatten_length(), 2}, rng));
  add_param(net.params, "fc.b", Tensor({2}));

  NoGradGuard off;
  Tensor probe({kPatchSize, kPatchSize, 3});
  Tensor l = net.logits(probe);
  detail::expect_shape(l, {2}, "discriminator logits");
  return net;
}

// Value-only scalar for callers outside a training graph.
inline float discriminator_scalar(const DiscriminatorNet& net,
                                  const Tensor& patch) {
  NoGradGuard off;
  const float v = net.prob_real(patch).item();
  if (!(v >= 0.f && v <= 1.f))
    throw std::runtime_error("discriminator_scalar: output outside [0,1]");
  return v;
}

// Guarded update: frozen networks must never take an optimizer step.
inline void update_network(DiscriminatorNet& net, AdamState& state,
                           const AdamConfig& cfg) {
  if (net.frozen)
    throw std::logic_error("update_network: network is frozen");
  adam_step(net.params, state, cfg);
}

// --- checkpoint file: magic, version, meta, params in lexicographic order --

constexpr uint32_t kNetworkMagic = 0x43504E57;  // "CPNW"
constexpr uint32_t kCheckpointVersion = 1;

inline void save_network_stream(std::ostream& os, const ParamSet& params,
                                int channels, bool frozen, const Rng& rng) {
  ckpt::put_u32(os, kNetworkMagic);
  ckpt::put_u32(os, kCheckpointVersion);
  ckpt::put_u32(os, static_cast<uint32_t>(channels));
  ckpt::put_u32(os, frozen ? 1u : 0u);
  ckpt::put_u64(os, rng.seed());
  ckpt::put_u64(os, rng.counter());
  ckpt::put_params(os, params);
}

struct NetworkFile {
  ParamSet params;
  int channels = 0;
  bool frozen = false;
  Rng rng;
};

inline NetworkFile load_network_stream(std::istream& is) {
  if (ckpt::get_u32(is) != kNetworkMagic)
    throw std::runtime_error("network file: bad magic");
  const uint32_t version = ckpt::get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("network file: incompatible version " +
                             std::to_string(version));
  NetworkFile nf;
  nf.channels = static_cast<int>(ckpt::get_u32(is));
  nf.frozen = ckpt::get_u32(is) != 0;
  const uint64_t seed = ckpt::get_u64(is);
  const uint64_t counter = ckpt::get_u64(is);
  nf.rng.restore(seed, counter);
  nf.params = ckpt::get_params(is);
  return nf;
}

inline void save_generator(const std::string& path, const GeneratorNet& net,
                           const Rng& rng = Rng(0)) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_generator: cannot write " + path);
  save_network_stream(os, net.params, net.channels, false, rng);
}

inline GeneratorNet load_generator(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_generator: cannot open " + path);
  NetworkFile nf = load_network_stream(is);
  GeneratorNet net;
  net.channels = nf.channels;
  net.params = std::move(nf.params);
  return net;
}

inline void save_discriminator(const std::string& path,
                               const DiscriminatorNet& net,
                               const Rng& rng = Rng(0)) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_discriminator: cannot write " + path);
  save_network_stream(os, net.params, net.base_channels, net.frozen, rng);
}

inline DiscriminatorNet load_discriminator(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_discriminator: cannot open " + path);
  NetworkFile nf = load_network_stream(is);
  DiscriminatorNet net;
  net.base_channels = nf.channels;
  net.frozen = nf.frozen;
  net.params = std::move(nf.params);
  return net;
}

}  // namespace cutpaste
