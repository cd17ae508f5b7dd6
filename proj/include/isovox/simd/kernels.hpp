#pragma once

#include <cstdint>
#include <string>
#include <type_traits>

// Dense math kernels behind the INR forward/backward passes.
//
// Every kernel computes each output element with a fixed serial reduction
// order, and multi-threading partitions work by output element. Results are
// therefore bitwise independent of the thread count for a given variant.
// Variants (scalar / AVX2 / AVX-512) differ only in rounding of the lane
// reduction tree and are equivalence-tested against the scalar reference.

namespace isovox::simd {

using i64 = std::int64_t;

enum class Variant { scalar = 0, avx2 = 1, avx512 = 2 };

struct Caps {
  bool avx2 = false;
  bool avx512 = false;
};

Caps detect_caps();
Variant best_variant();
Variant active_variant();
void set_variant(Variant v);  // throws isovox::Error if unsupported on this CPU
bool variant_supported(Variant v);
const char* variant_name(Variant v);
// Parses "scalar" | "avx2" | "avx512" | "auto".
Variant parse_variant(const std::string& name);

int threads();
void set_threads(int n);  // clamped to [1, 256]

// Runs fn(begin, end) over a contiguous partition of [0, n) on the
// configured number of threads. fn must not touch another chunk's outputs.
void parallel_ranges(i64 n, const void* ctx, void (*fn)(const void*, i64, i64));

template <typename F>
void parallel_for(i64 n, F&& f) {
  using Fn = std::remove_reference_t<F>;
  auto thunk = [](const void* ctx, i64 b, i64 e) { (*static_cast<const Fn*>(ctx))(b, e); };
  parallel_ranges(n, static_cast<const void*>(&f), thunk);
}

// ---- float kernels, dispatched to the active variant ----
// All matrices row-major, tightly packed.

// C[M x N] = A[M x K] * B[N x K]^T (+ bias[n] on each column when bias != nullptr)
void sgemm_nt(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              const float* bias);
// C[M x N] = A[M x K] * B[K x N]
void sgemm_nn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K);
// C[M x N] (+)= A[K x M]^T * B[K x N], i.e. C[m][n] = sum_k A[k][m] * B[k][n]
void sgemm_tn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              bool accumulate);
// out[n] = sum_m A[m][n]
void scolsum(const float* A, float* out, i64 M, i64 N);
// dst[i] += src[i]
void sadd_inplace(float* dst, const float* src, i64 n);
// y = max(x, 0)
void srelu(const float* x, float* y, i64 n);
// dx[i] = act[i] > 0 ? dy[i] * scale : 0   (act is the stored post-activation)
void srelu_backward(const float* dy, const float* act, float* dx, i64 n, float scale);
// Adam with bias correction applied via precomputed 1/(1-beta^t) factors.
void sadam_step(float* w, float* m, float* v, const float* g, i64 n, float lr,
                float beta1, float beta2, float eps, float inv_bc1, float inv_bc2);

// ---- scalar reference implementations (also the double-precision path) ----
namespace scalar {
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, const T* bias);
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K);
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, bool accumulate);
template <typename T>
void colsum(const T* A, T* out, i64 M, i64 N);
template <typename T>
void add_inplace(T* dst, const T* src, i64 n);
template <typename T>
void relu(const T* x, T* y, i64 n);
template <typename T>
void relu_backward(const T* dy, const T* act, T* dx, i64 n, T scale);
template <typename T>
void adam_step(T* w, T* m, T* v, const T* g, i64 n, T lr, T beta1, T beta2, T eps,
               T inv_bc1, T inv_bc2);
}  // namespace scalar

// Generic entry points used by the templated model code: float goes through
// the dispatch table, double through the scalar reference.
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, const T* bias) {
  if constexpr (std::is_same_v<T, float>)
    sgemm_nt(A, B, C, M, N, K, bias);
  else
    scalar::gemm_nt(A, B, C, M, N, K, bias);
}
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K) {
  if constexpr (std::is_same_v<T, float>)
    sgemm_nn(A, B, C, M, N, K);
  else
    scalar::gemm_nn(A, B, C, M, N, K);
}
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, i64 M, i64 N, i64 K, bool accumulate) {
  if constexpr (std::is_same_v<T, float>)
    sgemm_tn(A, B, C, M, N, K, accumulate);
  else
    scalar::gemm_tn(A, B, C, M, N, K, accumulate);
}
template <typename T>
void colsum(const T* A, T* out, i64 M, i64 N) {
  if constexpr (std::is_same_v<T, float>)
    scolsum(A, out, M, N);
  else
    scalar::colsum(A, out, M, N);
}
template <typename T>
void add_inplace(T* dst, const T* src, i64 n) {
  if constexpr (std::is_same_v<T, float>)
    sadd_inplace(dst, src, n);
  else
    scalar::add_inplace(dst, src, n);
}
template <typename T>
void relu(const T* x, T* y, i64 n) {
  if constexpr (std::is_same_v<T, float>)
    srelu(x, y, n);
  else
    scalar::relu(x, y, n);
}
template <typename T>
void relu_backward(const T* dy, const T* act, T* dx, i64 n, T scale) {
  if constexpr (std::is_same_v<T, float>)
    srelu_backward(dy, act, dx, n, scale);
  else
    scalar::relu_backward(dy, act, dx, n, scale);
}
template <typename T>
void adam_step(T* w, T* m, T* v, const T* g, i64 n, T lr, T beta1, T beta2, T eps,
               T inv_bc1, T inv_bc2) {
  if constexpr (std::is_same_v<T, float>)
    sadam_step(w, m, v, g, n, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
  else
    scalar::adam_step(w, m, v, g, n, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
}

}  // namespace isovox::simd
