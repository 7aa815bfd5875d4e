#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutpaste/rng.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {

// Named parameters with lexicographic iteration order.
using ParamSet = std::map<std::string, Tensor>;

inline Tensor& add_param(ParamSet& params, const std::string& name, Tensor t) {
  auto [it, inserted] = params.emplace(name, std::move(t));
  if (!inserted)
    throw std::invalid_argument("param '" + name + "' already exists");
  it->second.set_requires_grad(true);
  return it->second;
}

inline void zero_grads(ParamSet& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

inline int64_t param_count(const ParamSet& params) {
  int64_t n = 0;
  for (const auto& [name, p] : params) n += p.size();
  return n;
}

// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_init(const Shape& shape, Rng& rng) {
  int fan_in, fan_out;
  if (shape.size() == 4) {  // k x k x Cin x Cout
    const int rf = shape[0] * shape[1];
    fan_in = rf * shape[2];
    fan_out = rf * shape[3];
  } else if (shape.size() == 2) {  // N x M
    fan_in = shape[0];
    fan_out = shape[1];
  } else if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else {
    throw std::invalid_argument("xavier_init: unsupported rank " +
                                std::to_string(shape.size()));
  }
  const float a = std::sqrt(6.f / static_cast<float>(fan_in + fan_out));
  Tensor t(shape);
  for (float& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

namespace detail {

// Scoped requires_grad off: the graph treats these parameters as constants,
// so no weight-gradient work happens and no gradients accumulate into them.
class ParamGradPause {
 public:
  explicit ParamGradPause(ParamSet& params) : params_(params) {
    for (auto& [name, p] : params_) p.set_requires_grad(false);
  }
  ~ParamGradPause() {
    for (auto& [name, p] : params_) p.set_requires_grad(true);
  }
  ParamGradPause(const ParamGradPause&) = delete;
  ParamGradPause& operator=(const ParamGradPause&) = delete;

 private:
  ParamSet& params_;
};

}  // namespace detail

struct AdamConfig {
  float lr = 5e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// First/second moment buffers per parameter plus the shared step counter.
struct AdamState {
  struct Moments {
    std::vector<float> m, v;
  };
  std::map<std::string, Moments> moments;
  int64_t t = 0;
};

// One bias-corrected Adam update. Gradients are left untouched; the caller
// zeroes them between steps.
inline void adam_step(ParamSet& params, AdamState& state,
                      const AdamConfig& cfg = {}) {
  state.t += 1;
  const double b1t = 1.0 - std::pow(double(cfg.beta1), double(state.t));
  const double b2t = 1.0 - std::pow(double(cfg.beta2), double(state.t));
  for (auto& [name, p] : params) {
    if (!p.has_grad())
      throw std::invalid_argument("adam_step: parameter '" + name +
                                  "' has no gradient");
    auto& mom = state.moments[name];
    const size_t n = p.values().size();
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.f);
      mom.v.assign(n, 0.f);
    }
    const std::vector<float>& g = p.grad();
    float* w = p.data();
    for (size_t i = 0; i < n; ++i) {
      const float gi = g[i];
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.f - cfg.beta1) * gi;
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.f - cfg.beta2) * gi * gi;
      const float mhat = static_cast<float>(mom.m[i] / b1t);
      const float vhat = static_cast<float>(mom.v[i] / b2t);
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace cutpaste
