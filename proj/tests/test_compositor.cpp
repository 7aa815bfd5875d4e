#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cutpaste/compositor.hpp"
#include "cutpaste/gradcheck.hpp"
#include "cutpaste/networks.hpp"
#include "cutpaste/rng.hpp"

using namespace cutpaste;

namespace {

Image8 random_image(int h, int w, uint64_t seed) {
  Image8 img(h, w, 3);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng.below(256));
  return img;
}

Tensor random_alpha(int h, int w, uint64_t seed, float lo = 0.f, float hi = 1.f) {
  Tensor a({h, w});
  Rng rng(seed);
  for (float& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("extract_patch of a constant image is constant") {
  Image8 img(100, 100, 3, 200);
  Tensor p = extract_patch(img, {20, 30, 21, 17});
  REQUIRE(p.shape() == Shape{34, 34, 3});
  for (float v : p.values())
    REQUIRE(v == Catch::Approx(200.0 / 255.0).margin(1e-6));
}

TEST_CASE("extract_patch with zero context and a 34x34 box is an exact crop") {
  Image8 img = random_image(60, 60, 7);
  Tensor p = extract_patch(img, {5, 9, 34, 34}, 0.0);
  Tensor direct = crop_to_float(img, {5, 9, 34, 34});
  REQUIRE(bitwise_equal(p, direct));
}

TEST_CASE("extract_patch downsamples a checkerboard to flat gray") {
  Image8 img(80, 80, 3);
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 80; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((x + y) % 2) ? 255 : 0;
  Tensor p = extract_patch(img, {6, 6, 68, 68}, 0.0);
  for (float v : p.values()) REQUIRE(v == Catch::Approx(0.5f).margin(1e-6));
}

TEST_CASE("extract_patch rejects degenerate boxes") {
  Image8 img = random_image(40, 40, 8);
  REQUIRE_THROWS_AS(extract_patch(img, {10, 10, 0, 5}), std::invalid_argument);
  REQUIRE_THROWS_AS(extract_patch(img, {38, 38, 10, 10}), std::invalid_argument);
}

TEST_CASE("pad_mask places the mask inside a 3px zero border") {
  Tensor ones({28, 28}, 1.f);
  Tensor padded = pad_mask(ones);
  REQUIRE(padded.shape() == Shape{34, 34});
  double sum = 0.0, in_sum = 0.0;
  for (int y = 0; y < 34; ++y)
    for (int x = 0; x < 34; ++x) {
      const bool interior = y >= 3 && y < 31 && x >= 3 && x < 31;
      REQUIRE(padded.at2(y, x) == (interior ? 1.f : 0.f));
      sum += padded.at2(y, x);
    }
  for (float v : ones.values()) in_sum += v;
  REQUIRE(sum == in_sum);  // padding preserves total mass

  Tensor zeros({28, 28});
  Tensor pz = pad_mask(zeros);
  for (float v : pz.values()) REQUIRE(v == 0.f);

  REQUIRE_THROWS_AS(pad_mask(Tensor({27, 28})), std::invalid_argument);
}

TEST_CASE("composite endpoints reproduce foreground and background") {
  Image8 a = random_image(60, 60, 11), b = random_image(60, 60, 12);
  Tensor fg = extract_patch(a, {10, 10, 20, 20});
  Tensor bg = extract_patch(b, {15, 15, 20, 20});

  CompositePatch all_fg = composite(fg, bg, Tensor({34, 34}, 1.f));
  REQUIRE(bitwise_equal(all_fg.values, fg));
  REQUIRE(all_fg.kind == PatchKind::fake);

  CompositePatch all_bg = composite(fg, bg, Tensor({34, 34}, 0.f));
  REQUIRE(bitwise_equal(all_bg.values, bg));

  Tensor cf({34, 34, 3}, 0.2f), cb({34, 34, 3}, 0.8f);
  CompositePatch half = composite(cf, cb, Tensor({34, 34}, 0.5f));
  for (float v : half.values.values()) REQUIRE(v == Catch::Approx(0.5f));
}

TEST_CASE("compositing is convex and blend-symmetric") {
  Image8 a = random_image(60, 60, 13), b = random_image(60, 60, 14);
  Tensor fg = extract_patch(a, {12, 9, 22, 25});
  Tensor bg = extract_patch(b, {4, 18, 22, 25});
  Tensor alpha = random_alpha(34, 34, 15);

  Tensor f1 = composite(fg, bg, alpha).values;
  Tensor f2 = composite(bg, fg, alpha).values;
  for (int i = 0; i < f1.size(); ++i) {
    const float lo = std::min(fg[i], bg[i]), hi = std::max(fg[i], bg[i]);
    REQUIRE(f1[i] >= lo - 1e-6f);
    REQUIRE(f1[i] <= hi + 1e-6f);
    REQUIRE(f1[i] + f2[i] == Catch::Approx(fg[i] + bg[i]).margin(1e-6));
  }
}

TEST_CASE("composite rejects alpha outside [0,1] and shape mismatches") {
  Tensor fg({34, 34, 3}, 0.5f), bg({34, 34, 3}, 0.5f);
  Tensor bad({34, 34}, 1.5f);
  REQUIRE_THROWS_AS(composite(fg, bg, bad), std::invalid_argument);
  REQUIRE_THROWS_AS(composite(fg, bg, Tensor({28, 28}, 0.5f)),
                    std::invalid_argument);
}

TEST_CASE("cut_pair matches the (1-alpha)x formula") {
  Image8 a = random_image(60, 60, 16), b = random_image(60, 60, 17);
  Tensor fg = extract_patch(a, {10, 10, 24, 20});
  Tensor bg = extract_patch(b, {20, 20, 24, 20});

  auto [cr1, cf1] = cut_pair(fg, bg, Tensor({34, 34}, 1.f));
  for (float v : cr1.values.values()) REQUIRE(v == 0.f);
  for (float v : cf1.values.values()) REQUIRE(v == 0.f);
  REQUIRE(cr1.kind == PatchKind::cut_real);
  REQUIRE(cf1.kind == PatchKind::cut_fake);

  auto [cr0, cf0] = cut_pair(fg, bg, Tensor({34, 34}, 0.f));
  REQUIRE(bitwise_equal(cr0.values, fg));
  REQUIRE(bitwise_equal(cf0.values, bg));

  Tensor alpha = random_alpha(34, 34, 18);
  auto [cr, cf] = cut_pair(fg, bg, alpha);
  for (int y = 0; y < 34; ++y)
    for (int x = 0; x < 34; ++x)
      for (int c = 0; c < 3; ++c) {
        const float keep = 1.f - alpha.at2(y, x);
        REQUIRE(cr.values.at3(y, x, c) ==
                Catch::Approx(keep * fg.at3(y, x, c)).margin(1e-6));
        REQUIRE(cf.values.at3(y, x, c) ==
                Catch::Approx(keep * bg.at3(y, x, c)).margin(1e-6));
      }
}

TEST_CASE("mask upsampling for evaluation thresholds at 0.5") {
  Tensor hi({28, 28}, 0.9f);
  Tensor up = upsample_mask_for_eval(hi, {0, 0, 19, 23});
  REQUIRE(up.shape() == Shape{23, 19});
  for (float v : up.values()) REQUIRE(v == 1.f);

  Tensor lo({28, 28}, 0.1f);
  Tensor dn = upsample_mask_for_eval(lo, {0, 0, 19, 23});
  for (float v : dn.values()) REQUIRE(v == 0.f);

  // half-plane: the thresholded boundary stays within 1 px of the ideal line
  Tensor half({28, 28});
  for (int y = 0; y < 28; ++y)
    for (int x = 0; x < 28; ++x) half.at2(y, x) = x < 14 ? 1.f : 0.f;
  const int W = 56, H = 56;
  Tensor uph = upsample_mask_for_eval(half, {0, 0, W, H});
  // ideal boundary: left half foreground, scaled 2x -> boundary at x=28
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float want = x < 28 ? 1.f : 0.f;
      if (std::abs(x - 28) <= 1) continue;  // 1 px tolerance band
      REQUIRE(uph.at2(y, x) == want);
    }
}

TEST_CASE("viewport alpha without padding stretches the mask over the patch") {
  Tensor ones({28, 28}, 1.f);
  Tensor a = viewport_alpha(ones, false);
  REQUIRE(a.shape() == Shape{34, 34});
  for (float v : a.values()) REQUIRE(v == Catch::Approx(1.f));

  // with an all-ones mask and no padding, the fake equals the foreground
  Image8 src = random_image(60, 60, 19), dst = random_image(60, 60, 20);
  Tensor fg = extract_patch(src, {8, 8, 20, 20});
  Tensor bg = extract_patch(dst, {30, 30, 20, 20});
  Tensor fake = composite(fg, bg, a).values;
  for (int i = 0; i < fake.size(); ++i)
    REQUIRE(fake[i] == Catch::Approx(fg[i]).margin(1e-6));

  Tensor padded = viewport_alpha(ones, true);
  Tensor fake_padded = composite(fg, bg, padded).values;
  bool differs = false;
  for (int i = 0; i < fake_padded.size() && !differs; ++i)
    if (fake_padded[i] != fg[i]) differs = true;
  REQUIRE(differs);  // the border band exposes the paste
}

TEST_CASE("lsgan generator gradient flows through composite to alpha") {
  Rng rng(21);
  DiscriminatorNet d = build_discriminator(8, rng);
  Image8 a = random_image(60, 60, 22), b = random_image(60, 60, 23);
  Tensor fg = extract_patch(a, {10, 12, 18, 24});
  Tensor bg = extract_patch(b, {25, 5, 18, 24});
  Tensor alpha0 = random_alpha(34, 34, 24, 0.2f, 0.8f);

  const double err = grad_check(
      [&](const Tensor& alpha) {
        return lsgan_g_loss(d.prob_real(blend(fg, bg, alpha)));
      },
      alpha0, 1e-3);
  REQUIRE(err < 1e-3);
}
