#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cutpaste/gradcheck.hpp"
#include "cutpaste/networks.hpp"

using namespace cutpaste;

namespace {

Tensor random_patch(uint64_t seed) {
  Tensor t({kPatchSize, kPatchSize, 3});
  Rng rng(seed);
  for (float& v : t.values()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("discriminator at full printed scale flattens to 4608") {
  Rng rng(1);
  DiscriminatorNet d = build_discriminator(64, rng);
  REQUIRE(d.flatten_length() == 4608);
  REQUIRE(d.params.at("fc.w").shape() == Shape{4608, 2});
  // the dry run in build_discriminator already walked 34->32->15->7->3
  Tensor l = d.logits(random_patch(2));
  REQUIRE(l.shape() == Shape{2});
}

TEST_CASE("discriminator shape chain is width-independent") {
  for (int base : {8, 16, 32}) {
    Rng rng(3);
    DiscriminatorNet d = build_discriminator(base, rng);
    REQUIRE(d.flatten_length() == 9 * 8 * base);
    REQUIRE(discriminator_scalar(d, random_patch(4)) >= 0.f);
  }
  Rng rng(5);
  REQUIRE_THROWS_AS(build_discriminator(4, rng), std::invalid_argument);
}

TEST_CASE("generator forward on zeros yields a flat sigmoid(bias) mask") {
  Rng rng(7);
  GeneratorNet g = build_generator(32, rng);
  NoGradGuard off;
  Tensor mask = g.forward_from_crop(Tensor({56, 56, 3}));
  REQUIRE(mask.shape() == Shape{28, 28});
  for (float v : mask.values()) {
    REQUIRE(v > 0.f);
    REQUIRE(v < 1.f);
    REQUIRE(v == mask[0]);  // all-zero input + zero biases: constant pattern
  }
}

TEST_CASE("identical seeds build identical networks") {
  Rng a(11), b(11);
  GeneratorNet g1 = build_generator(16, a);
  GeneratorNet g2 = build_generator(16, b);
  for (const auto& [name, p] : g1.params)
    REQUIRE(bitwise_equal(p, g2.params.at(name)));

  Rng c(12), d(12);
  DiscriminatorNet d1 = build_discriminator(16, c);
  DiscriminatorNet d2 = build_discriminator(16, d);
  for (const auto& [name, p] : d1.params)
    REQUIRE(bitwise_equal(p, d2.params.at(name)));
}

TEST_CASE("discriminator scalar sits in [0,1] and is 0.5 for equal logits") {
  Rng rng(13);
  DiscriminatorNet d = build_discriminator(8, rng);
  // zero input -> zero activations -> zero logits -> softmax 0.5
  REQUIRE(discriminator_scalar(d, Tensor({kPatchSize, kPatchSize, 3})) ==
          Catch::Approx(0.5f));
  for (uint64_t s = 0; s < 10; ++s) {
    const float v = discriminator_scalar(d, random_patch(100 + s));
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }
  REQUIRE_THROWS_AS(d.logits(Tensor({kPatchSize, kPatchSize, 3}, 2.f)),
                    std::invalid_argument);
  REQUIRE_THROWS(d.logits(Tensor({28, 28, 3})));
}

TEST_CASE("discriminator gradient w.r.t. the patch matches finite differences") {
  Rng rng(17);
  DiscriminatorNet d = build_discriminator(8, rng);
  Tensor point = random_patch(18);
  for (float& v : point.values()) v = 0.2f + 0.6f * v;  // keep inside [0,1]
  const double err = grad_check(
      [&](const Tensor& x) { return d.prob_real(x); }, point, 1e-3);
  REQUIRE(err < 1e-3);
}

TEST_CASE("generator gradients reach every parameter") {
  Rng rng(19);
  GeneratorNet g = build_generator(16, rng);
  Tensor crop({56, 56, 3});
  Rng cr(20);
  for (float& v : crop.values()) v = cr.uniform();

  zero_grads(g.params);
  Tensor mask = g.forward_from_crop(crop);
  backward(mean_all(mask));
  for (const auto& [name, p] : g.params) {
    double norm = 0.0;
    for (float v : p.grad()) norm += std::abs(v);
    INFO("parameter " << name);
    REQUIRE(norm > 0.0);
  }
}

TEST_CASE("generator input gradient matches finite differences") {
  Rng rng(23);
  GeneratorNet g = build_generator(8, rng);
  Tensor crop({56, 56, 3});
  Rng cr(24);
  for (float& v : crop.values()) v = cr.uniform();
  // sampled coordinates: exhaustive differencing over 9408 inputs is slow
  zero_grads(g.params);
  Tensor crop_leaf = crop.detached();
  crop_leaf.set_requires_grad(true);
  Tensor loss = mean_all(g.forward_from_crop(crop_leaf));
  backward(loss);
  const std::vector<float> analytic = crop_leaf.grad();

  Rng pick(25);
  for (int s = 0; s < 25; ++s) {
    const int i = pick.below(crop.size());
    const float orig = crop[i];
    const double eps = 1e-2;
    const float xp = static_cast<float>(orig + eps);
    const float xm = static_cast<float>(orig - eps);
    NoGradGuard off;
    crop[i] = xp;
    const double fp = mean_all(g.forward_from_crop(crop)).item();
    crop[i] = xm;
    const double fm = mean_all(g.forward_from_crop(crop)).item();
    crop[i] = orig;
    const double numeric = (fp - fm) / (double(xp) - double(xm));
    const double a = analytic[static_cast<size_t>(i)];
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    REQUIRE(err < 1e-3);
  }
}

TEST_CASE("frozen networks refuse optimizer steps") {
  Rng rng(29);
  DiscriminatorNet d = build_discriminator(8, rng);
  d.frozen = true;
  zero_grads(d.params);
  AdamState st;
  REQUIRE_THROWS_AS(update_network(d, st, {}), std::logic_error);
}

TEST_CASE("network save/load round trip is bit exact") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "cutpaste_net_test").string();
  fs::create_directories(dir);

  Rng rng(31);
  GeneratorNet g = build_generator(24, rng);
  save_generator(dir + "/gen.bin", g);
  GeneratorNet g2 = load_generator(dir + "/gen.bin");
  REQUIRE(g2.channels == g.channels);
  REQUIRE(g2.params.size() == g.params.size());
  for (const auto& [name, p] : g.params)
    REQUIRE(bitwise_equal(p, g2.params.at(name)));

  DiscriminatorNet d = build_discriminator(16, rng);
  d.frozen = true;
  save_discriminator(dir + "/disc.bin", d);
  DiscriminatorNet d2 = load_discriminator(dir + "/disc.bin");
  REQUIRE(d2.frozen);
  REQUIRE(d2.base_channels == 16);
  for (const auto& [name, p] : d.params)
    REQUIRE(bitwise_equal(p, d2.params.at(name)));

  // corrupting the version field must be an explicit incompatibility error
  {
    std::fstream f(dir + "/gen.bin",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const uint32_t bad = 999;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  REQUIRE_THROWS_WITH(load_generator(dir + "/gen.bin"),
                      Catch::Matchers::ContainsSubstring("version"));
  fs::remove_all(dir);
}
