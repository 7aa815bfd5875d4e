#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cutpaste {

// Extents, row-major. Image tensors are laid out height x width x channels.
using Shape = std::vector<int>;

inline int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until first accumulation
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.f);
  }
};

inline thread_local bool grad_mode = true;

}  // namespace detail

// Disables graph recording for its scope (forward passes that must not
// produce gradients, e.g. fakes fed to a discriminator update).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode; }

// Dense float32 array with optional gradient buffer. Copying a Tensor copies
// the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.f)
      : node_(std::make_shared<detail::Node>()) {
    int n = shape_size(shape);
    node_->shape = std::move(shape);
    node_->values.assign(static_cast<size_t>(n), fill);
  }

  static Tensor from(Shape shape, std::vector<float> values) {
    if (static_cast<size_t>(shape_size(shape)) != values.size())
      throw std::invalid_argument("tensor: values length does not match shape");
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor scalar(float v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int size() const { return static_cast<int>(node_->values.size()); }

  float* data() { return node_->values.data(); }
  const float* data() const { return node_->values.data(); }
  std::vector<float>& values() { return node_->values; }
  const std::vector<float>& values() const { return node_->values; }

  float operator[](int i) const { return node_->values[static_cast<size_t>(i)]; }
  float& operator[](int i) { return node_->values[static_cast<size_t>(i)]; }

  // Row-major element access for 2-d / 3-d tensors.
  float at2(int y, int x) const { return node_->values[size_t(y * dim(1) + x)]; }
  float& at2(int y, int x) { return node_->values[size_t(y * dim(1) + x)]; }
  float at3(int y, int x, int c) const {
    return node_->values[size_t((y * dim(1) + x) * dim(2) + c)];
  }
  float& at3(int y, int x, int c) {
    return node_->values[size_t((y * dim(1) + x) * dim(2) + c)];
  }

  float item() const {
    if (size() != 1) throw std::invalid_argument("tensor: item() on non-scalar");
    return node_->values[0];
  }

  bool requires_grad() const { return node_ && node_->needs_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->needs_grad = v;
    return *this;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::vector<float>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<float>& grad() const {
    if (node_->grad.empty())
      throw std::runtime_error("tensor: gradient never populated");
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->values.size(), 0.f);
  }

  // Value copy detached from any graph.
  Tensor detached() const {
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    return t;
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline bool all_finite(const Tensor& t) {
  for (float v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return same_shape(a, b) && a.values() == b.values();
}

namespace detail {

// Builds an op node. The backward callback sees the finished node (its
// grad holds dL/dout) and accumulates into the parents it differentiates.
inline Tensor make_op(Shape shape, std::vector<float> values,
                      const std::vector<Tensor>& inputs,
                      std::function<void(Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!grad_mode) return out;
  bool needs = false;
  for (const Tensor& in : inputs)
    if (in.requires_grad()) needs = true;
  if (!needs) return out;
  Node* n = out.node();
  n->needs_grad = true;
  n->parents.reserve(inputs.size());
  for (const Tensor& in : inputs) n->parents.push_back(in.handle());
  n->backward = std::move(backward);
  return out;
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Interior gradients are scratch for
// one sweep; leaf gradients (parameters, check points) accumulate across
// sweeps until the caller zeroes them.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order)
    if (n->backward) n->grad.assign(n->values.size(), 0.f);

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace cutpaste
