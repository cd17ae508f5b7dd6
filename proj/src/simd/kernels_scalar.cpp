#include <cmath>

#include "isovox/simd/kernels.hpp"

// Reference kernels. These define the semantics the SIMD variants are tested
// against, and they are the execution path for double precision.

namespace isovox::simd::scalar {

template <typename T>
void gemm_nt(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, const T* bias) {
  parallel_for(M, [=](i64 m0, i64 m1) {
    for (i64 m = m0; m < m1; ++m) {
      const T* a = A + m * K;
      for (i64 n = 0; n < N; ++n) {
        const T* b = B + n * K;
        T acc = 0;
        for (i64 k = 0; k < K; ++k) acc += a[k] * b[k];
        C[m * N + n] = acc + (bias ? bias[n] : T(0));
      }
    }
  });
}

template <typename T>
void gemm_nn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K) {
  parallel_for(M, [=](i64 m0, i64 m1) {
    for (i64 m = m0; m < m1; ++m) {
      T* c = C + m * N;
      for (i64 n = 0; n < N; ++n) c[n] = 0;
      for (i64 k = 0; k < K; ++k) {
        const T a = A[m * K + k];
        const T* b = B + k * N;
        for (i64 n = 0; n < N; ++n) c[n] += a * b[n];
      }
    }
  });
}

template <typename T>
void gemm_tn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, bool accumulate) {
  // C rows are output neurons; the reduction over k (batch) stays serial per
  // element so the result does not depend on the thread partition.
  parallel_for(M, [=](i64 m0, i64 m1) {
    if (!accumulate)
      for (i64 m = m0; m < m1; ++m)
        for (i64 n = 0; n < N; ++n) C[m * N + n] = 0;
    for (i64 k = 0; k < K; ++k) {
      const T* b = B + k * N;
      for (i64 m = m0; m < m1; ++m) {
        const T a = A[k * M + m];
        if (a == T(0)) continue;
        T* c = C + m * N;
        for (i64 n = 0; n < N; ++n) c[n] += a * b[n];
      }
    }
  });
}

template <typename T>
void colsum(const T* A, T* out, i64 M, i64 N) {
  parallel_for(N, [=](i64 n0, i64 n1) {
    for (i64 n = n0; n < n1; ++n) out[n] = 0;
    for (i64 m = 0; m < M; ++m) {
      const T* a = A + m * N;
      for (i64 n = n0; n < n1; ++n) out[n] += a[n];
    }
  });
}

template <typename T>
void add_inplace(T* dst, const T* src, i64 n) {
  parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) dst[i] += src[i];
  });
}

template <typename T>
void relu(const T* x, T* y, i64 n) {
  parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  });
}

template <typename T>
void relu_backward(const T* dy, const T* act, T* dx, i64 n, T scale) {
  parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) dx[i] = act[i] > T(0) ? dy[i] * scale : T(0);
  });
}

template <typename T>
void adam_step(T* w, T* m, T* v, const T* g, i64 n, T lr, T beta1, T beta2, T eps,
               T inv_bc1, T inv_bc2) {
  parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) {
      m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
      v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
      const T mhat = m[i] * inv_bc1;
      const T vhat = v[i] * inv_bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  });
}

template void gemm_nt<float>(const float*, const float*, float*, i64, i64, i64, const float*);
template void gemm_nt<double>(const double*, const double*, double*, i64, i64, i64, const double*);
template void gemm_nn<float>(const float*, const float*, float*, i64, i64, i64);
template void gemm_nn<double>(const double*, const double*, double*, i64, i64, i64);
template void gemm_tn<float>(const float*, const float*, float*, i64, i64, i64, bool);
template void gemm_tn<double>(const double*, const double*, double*, i64, i64, i64, bool);
template void colsum<float>(const float*, float*, i64, i64);
template void colsum<double>(const double*, double*, i64, i64);
template void add_inplace<float>(float*, const float*, i64);
template void add_inplace<double>(double*, const double*, i64);
template void relu<float>(const float*, float*, i64);
template void relu<double>(const double*, double*, i64);
template void relu_backward<float>(const float*, const float*, float*, i64, float);
template void relu_backward<double>(const double*, const double*, double*, i64, double);
template void adam_step<float>(float*, float*, float*, const float*, i64, float, float,
                               float, float, float, float);
template void adam_step<double>(double*, double*, double*, const double*, i64, double,
                                double, double, double, double, double);

}  // namespace isovox::simd::scalar
