#pragma once

#include <cstddef>

namespace cutpaste {

// Small row-major float GEMM kernels. Accumulation over the reduction
// dimension runs in a fixed ascending order, so results are bit-stable for
// a given binary regardless of input data or call site.

// C[M x N] += A[M x K] * B[K x N]
inline void gemm_acc(int M, int K, int N, const float* A, const float* B,
                     float* C) {
  int m = 0;
  for (; m + 4 <= M; m += 4) {
    const float* a0 = A + static_cast<size_t>(m) * K;
    const float* a1 = a0 + K;
    const float* a2 = a1 + K;
    const float* a3 = a2 + K;
    float* c0 = C + static_cast<size_t>(m) * N;
    float* c1 = c0 + N;
    float* c2 = c1 + N;
    float* c3 = c2 + N;
    for (int k = 0; k < K; ++k) {
      const float* b = B + static_cast<size_t>(k) * N;
      const float v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      for (int n = 0; n < N; ++n) {
        const float bn = b[n];
        c0[n] += v0 * bn;
        c1[n] += v1 * bn;
        c2[n] += v2 * bn;
        c3[n] += v3 * bn;
      }
    }
  }
  for (; m < M; ++m) {
    const float* a = A + static_cast<size_t>(m) * K;
    float* c = C + static_cast<size_t>(m) * N;
    for (int k = 0; k < K; ++k) {
      const float* b = B + static_cast<size_t>(k) * N;
      const float v = a[k];
      for (int n = 0; n < N; ++n) c[n] += v * b[n];
    }
  }
}

// C[K x N] += A^T * B with A[P x K], B[P x N]
inline void gemm_tn_acc(int P, int K, int N, const float* A, const float* B,
                        float* C) {
  int p = 0;
  for (; p + 4 <= P; p += 4) {
    const float* a0 = A + static_cast<size_t>(p) * K;
    const float* a1 = a0 + K;
    const float* a2 = a1 + K;
    const float* a3 = a2 + K;
    const float* b0 = B + static_cast<size_t>(p) * N;
    const float* b1 = b0 + N;
    const float* b2 = b1 + N;
    const float* b3 = b2 + N;
    for (int k = 0; k < K; ++k) {
      float* c = C + static_cast<size_t>(k) * N;
      const float v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      for (int n = 0; n < N; ++n)
        c[n] += v0 * b0[n] + v1 * b1[n] + v2 * b2[n] + v3 * b3[n];
    }
  }
  for (; p < P; ++p) {
    const float* a = A + static_cast<size_t>(p) * K;
    const float* b = B + static_cast<size_t>(p) * N;
    for (int k = 0; k < K; ++k) {
      float* c = C + static_cast<size_t>(k) * N;
      const float v = a[k];
      for (int n = 0; n < N; ++n) c[n] += v * b[n];
    }
  }
}

}  // namespace cutpaste
