#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutpaste/gemm.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {

enum class Padding { valid, same };

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

// Patch extraction for convolution: one row per output pixel, k*k*C columns.
inline void im2col(const float* x, int H, int W, int C, int k, int stride,
                   int pad_top, int pad_left, int oh, int ow, float* col) {
  const int K = k * k * C;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      float* row = col + static_cast<size_t>(oy * ow + ox) * K;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad_top + ky;
        float* dst = row + static_cast<size_t>(ky) * k * C;
        if (iy < 0 || iy >= H) {
          std::memset(dst, 0, sizeof(float) * static_cast<size_t>(k) * C);
          continue;
        }
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad_left + kx;
          if (ix < 0 || ix >= W) {
            std::memset(dst + kx * C, 0, sizeof(float) * C);
          } else {
            std::memcpy(dst + kx * C, x + static_cast<size_t>(iy * W + ix) * C,
                        sizeof(float) * C);
          }
        }
      }
    }
  }
}

inline void col2im_add(const float* col, int H, int W, int C, int k,
                       int stride, int pad_top, int pad_left, int oh, int ow,
                       float* x) {
  const int K = k * k * C;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const float* row = col + static_cast<size_t>(oy * ow + ox) * K;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad_top + ky;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad_left + kx;
          if (ix < 0 || ix >= W) continue;
          float* dst = x + static_cast<size_t>(iy * W + ix) * C;
          const float* src = row + static_cast<size_t>(ky * k + kx) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

struct AxisMap {
  std::vector<int> i0, i1;
  std::vector<float> w;  // weight of i1
};

// Corner-aligned coordinate map: out j -> in j*(in-1)/(out-1).
inline AxisMap align_corners_map(int in, int out) {
  AxisMap m;
  m.i0.resize(static_cast<size_t>(out));
  m.i1.resize(static_cast<size_t>(out));
  m.w.resize(static_cast<size_t>(out));
  const double scale = out > 1 ? double(in - 1) / double(out - 1) : 0.0;
  for (int j = 0; j < out; ++j) {
    double src = j * scale;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 2) i0 = in - 2;
    if (i0 < 0) i0 = 0;
    m.i0[static_cast<size_t>(j)] = i0;
    m.i1[static_cast<size_t>(j)] = in > 1 ? i0 + 1 : 0;
    m.w[static_cast<size_t>(j)] = static_cast<float>(src - i0);
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<float> v(a.values());
  const float* bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return detail::make_op(a.shape(), std::move(v), {a, b},
                         [an, bn](detail::Node& self) {
                           if (an->needs_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                           }
                           if (bn->needs_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] += self.grad[i];
                           }
                         });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<float> v(a.values());
  const float* bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return detail::make_op(a.shape(), std::move(v), {a, b},
                         [an, bn](detail::Node& self) {
                           if (an->needs_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                           }
                           if (bn->needs_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] -= self.grad[i];
                           }
                         });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<float> v(a.values());
  const float* bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return detail::make_op(a.shape(), std::move(v), {a, b},
                         [an, bn](detail::Node& self) {
                           if (an->needs_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i] * bn->values[i];
                           }
                           if (bn->needs_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] += self.grad[i] * an->values[i];
                           }
                         });
}

inline Tensor add_scalar(const Tensor& a, float c) {
  std::vector<float> v(a.values());
  for (float& x : v) x += c;
  auto* an = a.node();
  return detail::make_op(a.shape(), std::move(v), {a},
                         [an](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i];
                         });
}

inline Tensor mul_scalar(const Tensor& a, float c) {
  std::vector<float> v(a.values());
  for (float& x : v) x *= c;
  auto* an = a.node();
  return detail::make_op(a.shape(), std::move(v), {a},
                         [an, c](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] * c;
                         });
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (float v : a.values()) s += v;
  auto* an = a.node();
  return detail::make_op({1}, {static_cast<float>(s)}, {a},
                         [an](detail::Node& self) {
                           an->ensure_grad();
                           const float g = self.grad[0];
                           for (float& x : an->grad) x += g;
                         });
}

inline Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (float v : a.values()) s += v;
  const float inv = 1.f / static_cast<float>(a.size());
  auto* an = a.node();
  return detail::make_op({1}, {static_cast<float>(s / a.size())}, {a},
                         [an, inv](detail::Node& self) {
                           an->ensure_grad();
                           const float g = self.grad[0] * inv;
                           for (float& x : an->grad) x += g;
                         });
}

// Scalar pick from a flat index.
inline Tensor at(const Tensor& a, int index) {
  if (index < 0 || index >= a.size())
    throw std::invalid_argument("at: index out of range");
  auto* an = a.node();
  return detail::make_op({1}, {a[index]}, {a},
                         [an, index](detail::Node& self) {
                           an->ensure_grad();
                           an->grad[static_cast<size_t>(index)] += self.grad[0];
                         });
}

// Average of a list of scalar terms, summed in list order.
inline Tensor mean_of(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw std::invalid_argument("mean_of: empty list");
  Tensor acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return mul_scalar(acc, 1.f / static_cast<float>(terms.size()));
}

// ---------------------------------------------------------------------------
// Activations

inline Tensor relu(const Tensor& a) {
  std::vector<float> v(a.values());
  for (float& x : v) x = x > 0.f ? x : 0.f;
  auto* an = a.node();
  return detail::make_op(a.shape(), std::move(v), {a},
                         [an](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             if (an->values[i] > 0.f)
                               an->grad[i] += self.grad[i];
                         });
}

inline Tensor leaky_relu(const Tensor& a, float alpha = 0.2f) {
  std::vector<float> v(a.values());
  for (float& x : v) x = x > 0.f ? x : alpha * x;
  auto* an = a.node();
  return detail::make_op(a.shape(), std::move(v), {a},
                         [an, alpha](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] *
                                            (an->values[i] > 0.f ? 1.f : alpha);
                         });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<float> v(a.values());
  for (float& x : v) x = 1.f / (1.f + std::exp(-x));
  auto* an = a.node();
  return detail::make_op(a.shape(), std::move(v), {a},
                         [an](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i) {
                             const float s = self.values[i];
                             an->grad[i] += self.grad[i] * s * (1.f - s);
                           }
                         });
}

// Softmax over the last dimension.
inline Tensor softmax(const Tensor& a) {
  const int d = a.shape().back();
  if (d < 2) throw std::invalid_argument("softmax: last dimension must be >= 2");
  const int rows = a.size() / d;
  std::vector<float> v(a.values());
  for (int r = 0; r < rows; ++r) {
    float* row = v.data() + static_cast<size_t>(r) * d;
    float mx = row[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int i = 0; i < d; ++i) row[i] *= inv;
  }
  auto* an = a.node();
  return detail::make_op(
      a.shape(), std::move(v), {a}, [an, d, rows](detail::Node& self) {
        an->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          const float* y = self.values.data() + static_cast<size_t>(r) * d;
          const float* dy = self.grad.data() + static_cast<size_t>(r) * d;
          float* dx = an->grad.data() + static_cast<size_t>(r) * d;
          double dot = 0.0;
          for (int i = 0; i < d; ++i) dot += double(dy[i]) * y[i];
          for (int i = 0; i < d; ++i)
            dx[i] += y[i] * (dy[i] - static_cast<float>(dot));
        }
      });
}

enum class Activation { relu, leaky_relu, sigmoid, softmax };

inline Tensor activation(Activation kind, const Tensor& a) {
  switch (kind) {
    case Activation::relu: return relu(a);
    case Activation::leaky_relu: return leaky_relu(a);
    case Activation::sigmoid: return sigmoid(a);
    case Activation::softmax: return softmax(a);
  }
  throw std::invalid_argument("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// Linear layers

// input: [H x W x Cin], kernel: [k x k x Cin x Cout] (k odd), bias: [Cout].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, int stride, Padding padding) {
  if (input.rank() != 3 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d: input must be HxWxC, kernel kxkxCinxCout");
  const int H = input.dim(0), W = input.dim(1), Cin = input.dim(2);
  const int k = kernel.dim(0);
  if (kernel.dim(1) != k || (k % 2) == 0)
    throw std::invalid_argument("conv2d: kernel must be square with odd size");
  if (kernel.dim(2) != Cin)
    throw std::invalid_argument("conv2d: kernel Cin " +
                                std::to_string(kernel.dim(2)) +
                                " does not match input channels " +
                                std::to_string(Cin));
  const int Cout = kernel.dim(3);
  if (bias.size() != Cout)
    throw std::invalid_argument("conv2d: bias length must equal Cout");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");

  int oh, ow, pad_top, pad_left;
  if (padding == Padding::valid) {
    if (H < k || W < k)
      throw std::invalid_argument("conv2d: input smaller than kernel for valid padding");
    oh = (H - k) / stride + 1;
    ow = (W - k) / stride + 1;
    pad_top = pad_left = 0;
  } else {
    oh = (H + stride - 1) / stride;
    ow = (W + stride - 1) / stride;
    const int pad_h = std::max((oh - 1) * stride + k - H, 0);
    const int pad_w = std::max((ow - 1) * stride + k - W, 0);
    pad_top = pad_h / 2;   // extra pixel goes to the trailing side
    pad_left = pad_w / 2;
  }

  const int P = oh * ow;
  const int K = k * k * Cin;
  std::vector<float> col(static_cast<size_t>(P) * K);
  detail::im2col(input.data(), H, W, Cin, k, stride, pad_top, pad_left, oh, ow,
                 col.data());

  std::vector<float> out(static_cast<size_t>(P) * Cout);
  for (int p = 0; p < P; ++p)
    std::memcpy(out.data() + static_cast<size_t>(p) * Cout, bias.data(),
                sizeof(float) * static_cast<size_t>(Cout));
  gemm_acc(P, K, Cout, col.data(), kernel.data(), out.data());

  auto* xn = input.node();
  auto* wn = kernel.node();
  auto* bn = bias.node();
  auto bwd = [xn, wn, bn, H, W, Cin, k, stride, pad_top, pad_left, oh, ow,
              Cout](detail::Node& self) {
    const int P = oh * ow;
    const int K = k * k * Cin;
    const float* dY = self.grad.data();
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (int p = 0; p < P; ++p)
        for (int c = 0; c < Cout; ++c)
          bn->grad[static_cast<size_t>(c)] += dY[static_cast<size_t>(p) * Cout + c];
    }
    if (wn->needs_grad) {
      wn->ensure_grad();
      std::vector<float> col(static_cast<size_t>(P) * K);
      detail::im2col(xn->values.data(), H, W, Cin, k, stride, pad_top,
                     pad_left, oh, ow, col.data());
      gemm_tn_acc(P, K, Cout, col.data(), dY, wn->grad.data());
    }
    if (xn->needs_grad) {
      xn->ensure_grad();
      std::vector<float> wt(static_cast<size_t>(Cout) * K);
      const float* w = wn->values.data();
      for (int kk = 0; kk < K; ++kk)
        for (int c = 0; c < Cout; ++c)
          wt[static_cast<size_t>(c) * K + kk] = w[static_cast<size_t>(kk) * Cout + c];
      std::vector<float> dcol(static_cast<size_t>(P) * K, 0.f);
      gemm_acc(P, Cout, K, dY, wt.data(), dcol.data());
      detail::col2im_add(dcol.data(), H, W, Cin, k, stride, pad_top, pad_left,
                         oh, ow, xn->grad.data());
    }
  };
  return detail::make_op({oh, ow, Cout}, std::move(out),
                         {input, kernel, bias}, std::move(bwd));
}

// input flattened to [N], weight: [N x M], bias: [M].
inline Tensor fully_connected(const Tensor& input, const Tensor& weight,
                              const Tensor& bias) {
  if (weight.rank() != 2)
    throw std::invalid_argument("fully_connected: weight must be NxM");
  const int N = weight.dim(0), M = weight.dim(1);
  if (input.size() != N)
    throw std::invalid_argument("fully_connected: input length " +
                                std::to_string(input.size()) +
                                " does not match weight rows " +
                                std::to_string(N));
  if (bias.size() != M)
    throw std::invalid_argument("fully_connected: bias length must equal M");

  std::vector<float> out(bias.values());
  gemm_acc(1, N, M, input.data(), weight.data(), out.data());

  auto* xn = input.node();
  auto* wn = weight.node();
  auto* bn = bias.node();
  auto bwd = [xn, wn, bn, N, M](detail::Node& self) {
    const float* dy = self.grad.data();
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (int m = 0; m < M; ++m) bn->grad[static_cast<size_t>(m)] += dy[m];
    }
    if (wn->needs_grad) {
      wn->ensure_grad();
      gemm_tn_acc(1, N, M, xn->values.data(), dy, wn->grad.data());
    }
    if (xn->needs_grad) {
      xn->ensure_grad();
      const float* w = wn->values.data();
      for (int n = 0; n < N; ++n) {
        double s = 0.0;
        const float* wrow = w + static_cast<size_t>(n) * M;
        for (int m = 0; m < M; ++m) s += double(wrow[m]) * dy[m];
        xn->grad[static_cast<size_t>(n)] += static_cast<float>(s);
      }
    }
  };
  return detail::make_op({M}, std::move(out), {input, weight, bias},
                         std::move(bwd));
}

// Shape change with identical storage order.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch");
  auto* an = a.node();
  return detail::make_op(std::move(shape), a.values(), {a},
                         [an](detail::Node& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i];
                         });
}

inline Tensor flatten(const Tensor& a) { return reshape(a, {a.size()}); }

// ---------------------------------------------------------------------------
// Resampling

// Corner-aligned bilinear resize; input [H x W] or [H x W x C].
inline Tensor resize_bilinear(const Tensor& a, int oh, int ow) {
  if (a.rank() != 2 && a.rank() != 3)
    throw std::invalid_argument("resize_bilinear: rank must be 2 or 3");
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("resize_bilinear: output extents must be positive");
  const int H = a.dim(0), W = a.dim(1);
  const int C = a.rank() == 3 ? a.dim(2) : 1;
  const auto my = detail::align_corners_map(H, oh);
  const auto mx = detail::align_corners_map(W, ow);

  std::vector<float> out(static_cast<size_t>(oh) * ow * C);
  const float* x = a.data();
  for (int j = 0; j < oh; ++j) {
    const int y0 = my.i0[j], y1 = my.i1[j];
    const float wy = my.w[j];
    for (int i = 0; i < ow; ++i) {
      const int x0 = mx.i0[i], x1 = mx.i1[i];
      const float wx = mx.w[i];
      const float w00 = (1.f - wy) * (1.f - wx), w01 = (1.f - wy) * wx;
      const float w10 = wy * (1.f - wx), w11 = wy * wx;
      const float* p00 = x + static_cast<size_t>(y0 * W + x0) * C;
      const float* p01 = x + static_cast<size_t>(y0 * W + x1) * C;
      const float* p10 = x + static_cast<size_t>(y1 * W + x0) * C;
      const float* p11 = x + static_cast<size_t>(y1 * W + x1) * C;
      float* o = out.data() + static_cast<size_t>(j * ow + i) * C;
      for (int c = 0; c < C; ++c)
        o[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
    }
  }

  Shape oshape = a.rank() == 3 ? Shape{oh, ow, C} : Shape{oh, ow};
  auto* an = a.node();
  auto bwd = [an, my, mx, W, C, oh, ow](detail::Node& self) {
    an->ensure_grad();
    float* dx = an->grad.data();
    const float* dy = self.grad.data();
    for (int j = 0; j < oh; ++j) {
      const int y0 = my.i0[j], y1 = my.i1[j];
      const float wy = my.w[j];
      for (int i = 0; i < ow; ++i) {
        const int x0 = mx.i0[i], x1 = mx.i1[i];
        const float wx = mx.w[i];
        const float w00 = (1.f - wy) * (1.f - wx), w01 = (1.f - wy) * wx;
        const float w10 = wy * (1.f - wx), w11 = wy * wx;
        const float* g = dy + static_cast<size_t>(j * ow + i) * C;
        float* p00 = dx + static_cast<size_t>(y0 * W + x0) * C;
        float* p01 = dx + static_cast<size_t>(y0 * W + x1) * C;
        float* p10 = dx + static_cast<size_t>(y1 * W + x0) * C;
        float* p11 = dx + static_cast<size_t>(y1 * W + x1) * C;
        for (int c = 0; c < C; ++c) {
          p00[c] += w00 * g[c];
          p01[c] += w01 * g[c];
          p10[c] += w10 * g[c];
          p11[c] += w11 * g[c];
        }
      }
    }
  };
  return detail::make_op(std::move(oshape), std::move(out), {a},
                         std::move(bwd));
}

// Doubles both spatial extents with corners fixed.
inline Tensor bilinear_upsample(const Tensor& a) {
  if (a.dim(0) < 2 || a.dim(1) < 2)
    throw std::invalid_argument("bilinear_upsample: spatial extents must be >= 2");
  return resize_bilinear(a, 2 * a.dim(0), 2 * a.dim(1));
}

// Zero border around a 2-d mask.
inline Tensor pad2d(const Tensor& a, int pad) {
  if (a.rank() != 2) throw std::invalid_argument("pad2d: rank must be 2");
  if (pad < 0) throw std::invalid_argument("pad2d: negative pad");
  const int H = a.dim(0), W = a.dim(1);
  const int OH = H + 2 * pad, OW = W + 2 * pad;
  std::vector<float> out(static_cast<size_t>(OH) * OW, 0.f);
  for (int y = 0; y < H; ++y)
    std::memcpy(out.data() + static_cast<size_t>(y + pad) * OW + pad,
                a.data() + static_cast<size_t>(y) * W, sizeof(float) * W);
  auto* an = a.node();
  return detail::make_op({OH, OW}, std::move(out), {a},
                         [an, H, W, OW, pad](detail::Node& self) {
                           an->ensure_grad();
                           for (int y = 0; y < H; ++y) {
                             const float* g = self.grad.data() +
                                              static_cast<size_t>(y + pad) * OW + pad;
                             float* d = an->grad.data() + static_cast<size_t>(y) * W;
                             for (int x = 0; x < W; ++x) d[x] += g[x];
                           }
                         });
}

// 2x2 mean pooling; spatial extents must be even.
inline Tensor avg_pool2x2(const Tensor& a) {
  if (a.rank() != 3) throw std::invalid_argument("avg_pool2x2: rank must be 3");
  const int H = a.dim(0), W = a.dim(1), C = a.dim(2);
  if (H % 2 || W % 2)
    throw std::invalid_argument("avg_pool2x2: extents must be even");
  const int oh = H / 2, ow = W / 2;
  std::vector<float> out(static_cast<size_t>(oh) * ow * C);
  const float* x = a.data();
  for (int j = 0; j < oh; ++j)
    for (int i = 0; i < ow; ++i) {
      const float* r0 = x + static_cast<size_t>((2 * j) * W + 2 * i) * C;
      const float* r1 = x + static_cast<size_t>((2 * j + 1) * W + 2 * i) * C;
      float* o = out.data() + static_cast<size_t>(j * ow + i) * C;
      for (int c = 0; c < C; ++c)
        o[c] = 0.25f * (r0[c] + r0[C + c] + r1[c] + r1[C + c]);
    }
  auto* an = a.node();
  return detail::make_op({oh, ow, C}, std::move(out), {a},
                         [an, W, C, oh, ow](detail::Node& self) {
                           an->ensure_grad();
                           for (int j = 0; j < oh; ++j)
                             for (int i = 0; i < ow; ++i) {
                               const float* g = self.grad.data() +
                                                static_cast<size_t>(j * ow + i) * C;
                               float* r0 = an->grad.data() +
                                           static_cast<size_t>((2 * j) * W + 2 * i) * C;
                               float* r1 = an->grad.data() +
                                           static_cast<size_t>((2 * j + 1) * W + 2 * i) * C;
                               for (int c = 0; c < C; ++c) {
                                 const float v = 0.25f * g[c];
                                 r0[c] += v;
                                 r0[C + c] += v;
                                 r1[c] += v;
                                 r1[C + c] += v;
                               }
                             }
                         });
}

// ---------------------------------------------------------------------------
// Compositing and losses

// out = alpha*fg + (1-alpha)*bg with fg,bg [H x W x C] and alpha [H x W].
inline Tensor blend(const Tensor& fg, const Tensor& bg, const Tensor& alpha) {
  detail::check_same_shape(fg, bg, "blend");
  if (fg.rank() != 3 || alpha.rank() != 2 || alpha.dim(0) != fg.dim(0) ||
      alpha.dim(1) != fg.dim(1))
    throw std::invalid_argument("blend: alpha must match fg/bg spatially");
  const int H = fg.dim(0), W = fg.dim(1), C = fg.dim(2);
  std::vector<float> out(static_cast<size_t>(H) * W * C);
  const float* f = fg.data();
  const float* b = bg.data();
  const float* a = alpha.data();
  for (int p = 0; p < H * W; ++p) {
    const float av = a[p];
    const float* fp = f + static_cast<size_t>(p) * C;
    const float* bp = b + static_cast<size_t>(p) * C;
    float* op = out.data() + static_cast<size_t>(p) * C;
    for (int c = 0; c < C; ++c) op[c] = av * fp[c] + (1.f - av) * bp[c];
  }
  auto* fn = fg.node();
  auto* bn = bg.node();
  auto* an = alpha.node();
  auto bwd = [fn, bn, an, H, W, C](detail::Node& self) {
    const float* g = self.grad.data();
    if (an->needs_grad) {
      an->ensure_grad();
      for (int p = 0; p < H * W; ++p) {
        double s = 0.0;
        const float* fp = fn->values.data() + static_cast<size_t>(p) * C;
        const float* bp = bn->values.data() + static_cast<size_t>(p) * C;
        const float* gp = g + static_cast<size_t>(p) * C;
        for (int c = 0; c < C; ++c) s += double(fp[c] - bp[c]) * gp[c];
        an->grad[static_cast<size_t>(p)] += static_cast<float>(s);
      }
    }
    if (fn->needs_grad) {
      fn->ensure_grad();
      for (int p = 0; p < H * W; ++p) {
        const float av = an->values[static_cast<size_t>(p)];
        const float* gp = g + static_cast<size_t>(p) * C;
        float* dp = fn->grad.data() + static_cast<size_t>(p) * C;
        for (int c = 0; c < C; ++c) dp[c] += av * gp[c];
      }
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (int p = 0; p < H * W; ++p) {
        const float av = an->values[static_cast<size_t>(p)];
        const float* gp = g + static_cast<size_t>(p) * C;
        float* dp = bn->grad.data() + static_cast<size_t>(p) * C;
        for (int c = 0; c < C; ++c) dp[c] += (1.f - av) * gp[c];
      }
    }
  };
  return detail::make_op(fg.shape(), std::move(out), {fg, bg, alpha},
                         std::move(bwd));
}

// Mean of -[t log p + (1-t) log(1-p)]; p clamped to [1e-6, 1-1e-6].
inline Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target) {
  detail::check_same_shape(pred, target, "binary_cross_entropy");
  constexpr float kEps = 1e-6f;
  const size_t n = pred.values().size();
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const float p = std::clamp(pred[static_cast<int>(i)], kEps, 1.f - kEps);
    const float t = target[static_cast<int>(i)];
    sum -= double(t) * std::log(double(p)) +
           double(1.f - t) * std::log(double(1.f - p));
  }
  auto* pn = pred.node();
  auto* tn = target.node();
  const float invn = 1.f / static_cast<float>(n);
  auto bwd = [pn, tn, invn, n](detail::Node& self) {
    if (!pn->needs_grad) return;
    pn->ensure_grad();
    const float g = self.grad[0] * invn;
    for (size_t i = 0; i < n; ++i) {
      const float praw = pn->values[i];
      if (praw < kEps || praw > 1.f - kEps) continue;  // clamp region
      const float t = tn->values[i];
      pn->grad[i] += g * (praw - t) / (praw * (1.f - praw));
    }
  };
  return detail::make_op({1}, {static_cast<float>(sum / double(n))},
                         {pred, target}, std::move(bwd));
}

// LSGAN objectives on scalar discriminator outputs.
inline Tensor lsgan_d_loss(const Tensor& d_real, const Tensor& d_fake) {
  return add(square(d_fake), square(add_scalar(d_real, -1.f)));
}

inline Tensor lsgan_g_loss(const Tensor& d_fake) {
  return square(add_scalar(d_fake, -1.f));
}

}  // namespace cutpaste
