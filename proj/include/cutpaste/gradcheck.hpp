#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutpaste/optim.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {

// Scalar-valued function of one tensor, evaluated through the graph.
using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares analytic gradients against central differences. Differences are
// taken in 64-bit; the returned value is
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
inline double grad_check(const ScalarFn& fn, const Tensor& point,
                         double eps = 1e-3) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

  Tensor x = point.detached();
  x.set_requires_grad(true);
  Tensor loss = fn(x);
  if (loss.size() != 1)
    throw std::invalid_argument("grad_check: fn must return a scalar");
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("grad_check: non-finite function value");
  x.zero_grad();
  backward(loss);
  const std::vector<float> analytic = x.grad();

  Tensor probe = point.detached();
  double worst = 0.0;
  for (int i = 0; i < probe.size(); ++i) {
    const float orig = probe[i];
    const float xp = static_cast<float>(orig + eps);
    const float xm = static_cast<float>(orig - eps);
    probe[i] = xp;
    const double fp = double(fn(probe).item());
    probe[i] = xm;
    const double fm = double(fn(probe).item());
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite function value");
    const double numeric = (fp - fm) / (double(xp) - double(xm));
    const double a = double(analytic[static_cast<size_t>(i)]);
    const double err = std::abs(a - numeric) /
                       std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

// Checks a loss that depends on a parameter set, perturbing a sample of
// coordinates per parameter. Exhaustive differencing over full networks is
// far too slow; sampled coordinates catch wiring mistakes just as well.
inline double grad_check_params(const std::function<Tensor()>& loss_fn,
                                ParamSet& params, Rng& rng,
                                int coords_per_param = 4, double eps = 1e-3) {
  zero_grads(params);
  Tensor loss = loss_fn();
  if (loss.size() != 1)
    throw std::invalid_argument("grad_check_params: loss must be a scalar");
  backward(loss);

  std::map<std::string, std::vector<float>> analytic;
  for (auto& [name, p] : params) analytic[name] = p.grad();

  double worst = 0.0;
  for (auto& [name, p] : params) {
    for (int s = 0; s < coords_per_param; ++s) {
      const int i = rng.below(p.size());
      const float orig = p[i];
      const float xp = static_cast<float>(orig + eps);
      const float xm = static_cast<float>(orig - eps);
      p[i] = xp;
      const double fp = double(loss_fn().item());
      p[i] = xm;
      const double fm = double(loss_fn().item());
      p[i] = orig;
      const double numeric = (fp - fm) / (double(xp) - double(xm));
      const double a = double(analytic[name][static_cast<size_t>(i)]);
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cutpaste
