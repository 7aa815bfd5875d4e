// Micro-benchmark for the layer kernels; prints per-pass timings so channel
// defaults can be chosen against the CPU budget.

#include <chrono>
#include <cstdio>
#include <vector>

#include "cutpaste/ops.hpp"
#include "cutpaste/optim.hpp"
#include "cutpaste/rng.hpp"

using namespace cutpaste;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = rng.uniform(-1.f, 1.f);
  return t;
}

// Forward+backward through a discriminator-like stack at the given base width.
void bench_disc(int base, int iters) {
  Rng rng(42);
  const int c1 = base, c2 = 2 * base, c3 = 4 * base, c4 = 8 * base;
  ParamSet params;
  add_param(params, "w1", xavier_init({3, 3, 3, c1}, rng));
  add_param(params, "b1", Tensor({c1}));
  add_param(params, "w2", xavier_init({3, 3, c1, c2}, rng));
  add_param(params, "b2", Tensor({c2}));
  add_param(params, "w3", xavier_init({3, 3, c2, c3}, rng));
  add_param(params, "b3", Tensor({c3}));
  add_param(params, "w4", xavier_init({3, 3, c3, c4}, rng));
  add_param(params, "b4", Tensor({c4}));
  add_param(params, "fw", xavier_init({9 * c4, 2}, rng));
  add_param(params, "fb", Tensor({2}));

  Tensor x = random_tensor({34, 34, 3}, rng);
  double t0 = now_ms();
  for (int i = 0; i < iters; ++i) {
    auto h1 = leaky_relu(conv2d(x, params["w1"], params["b1"], 1, Padding::valid));
    auto h2 = leaky_relu(conv2d(h1, params["w2"], params["b2"], 2, Padding::valid));
    auto h3 = leaky_relu(conv2d(h2, params["w3"], params["b3"], 2, Padding::valid));
    auto h4 = leaky_relu(conv2d(h3, params["w4"], params["b4"], 2, Padding::valid));
    auto logits = fully_connected(flatten(h4), params["fw"], params["fb"]);
    auto loss = mean_all(softmax(logits));
    zero_grads(params);
    backward(loss);
  }
  double dt = (now_ms() - t0) / iters;
  std::printf("disc base=%-3d fwd+bwd: %8.3f ms/patch\n", base, dt);
}

// Generator-like stack: 3-stage stride-2 encoder plus the mask head.
void bench_gen(int C, int iters) {
  Rng rng(7);
  const int e1 = std::max(8, C / 4), e2 = std::max(8, C / 2);
  ParamSet params;
  add_param(params, "e1w", xavier_init({3, 3, 3, e1}, rng));
  add_param(params, "e1b", Tensor({e1}));
  add_param(params, "e2w", xavier_init({3, 3, e1, e2}, rng));
  add_param(params, "e2b", Tensor({e2}));
  add_param(params, "e3w", xavier_init({3, 3, e2, C}, rng));
  add_param(params, "e3b", Tensor({C}));
  add_param(params, "h1w", xavier_init({1, 1, C, C}, rng));
  add_param(params, "h1b", Tensor({C}));
  add_param(params, "h2w", xavier_init({3, 3, C, C}, rng));
  add_param(params, "h2b", Tensor({C}));
  add_param(params, "h3w", xavier_init({3, 3, C, C}, rng));
  add_param(params, "h3b", Tensor({C}));
  add_param(params, "h4w", xavier_init({3, 3, C, C}, rng));
  add_param(params, "h4b", Tensor({C}));
  add_param(params, "h5w", xavier_init({3, 3, C, 1}, rng));
  add_param(params, "h5b", Tensor({1}));

  Tensor x = random_tensor({56, 56, 3}, rng);
  double t0 = now_ms();
  for (int i = 0; i < iters; ++i) {
    auto f = relu(conv2d(x, params["e1w"], params["e1b"], 2, Padding::same));
    f = relu(conv2d(f, params["e2w"], params["e2b"], 2, Padding::same));
    f = relu(conv2d(f, params["e3w"], params["e3b"], 2, Padding::same));
    f = relu(conv2d(f, params["h1w"], params["h1b"], 1, Padding::same));
    f = relu(conv2d(f, params["h2w"], params["h2b"], 1, Padding::same));
    f = bilinear_upsample(f);
    f = relu(conv2d(f, params["h3w"], params["h3b"], 1, Padding::same));
    f = bilinear_upsample(f);
    f = relu(conv2d(f, params["h4w"], params["h4b"], 1, Padding::same));
    f = conv2d(f, params["h5w"], params["h5b"], 1, Padding::same);
    auto loss = mean_all(sigmoid(f));
    zero_grads(params);
    backward(loss);
  }
  double dt = (now_ms() - t0) / iters;
  std::printf("gen  C=%-5d fwd+bwd: %8.3f ms/sample\n", C, dt);
}

}  // namespace

int main() {
  bench_disc(16, 50);
  bench_disc(32, 30);
  bench_disc(64, 10);
  bench_gen(16, 50);
  bench_gen(32, 30);
  bench_gen(64, 10);
  return 0;
}
