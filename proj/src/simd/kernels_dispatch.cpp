#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "isovox/common.hpp"
#include "isovox/simd/kernels.hpp"

namespace isovox::simd {

namespace avx2 {
void sgemm_nt(const float*, const float*, float*, i64, i64, i64, const float*);
void sgemm_nn(const float*, const float*, float*, i64, i64, i64);
void sgemm_tn(const float*, const float*, float*, i64, i64, i64, bool);
void scolsum(const float*, float*, i64, i64);
void sadd_inplace(float*, const float*, i64);
void srelu(const float*, float*, i64);
void srelu_backward(const float*, const float*, float*, i64, float);
void sadam_step(float*, float*, float*, const float*, i64, float, float, float, float,
                float, float);
}  // namespace avx2

namespace avx512 {
void sgemm_nt(const float*, const float*, float*, i64, i64, i64, const float*);
void sgemm_nn(const float*, const float*, float*, i64, i64, i64);
void sgemm_tn(const float*, const float*, float*, i64, i64, i64, bool);
void scolsum(const float*, float*, i64, i64);
void sadd_inplace(float*, const float*, i64);
void srelu(const float*, float*, i64);
void srelu_backward(const float*, const float*, float*, i64, float);
void sadam_step(float*, float*, float*, const float*, i64, float, float, float, float,
                float, float);
}  // namespace avx512

Caps detect_caps() {
  Caps c;
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  c.avx2 = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  c.avx512 = c.avx2 && __builtin_cpu_supports("avx512f");
#endif
  return c;
}

bool variant_supported(Variant v) {
  static const Caps caps = detect_caps();
  switch (v) {
    case Variant::scalar: return true;
    case Variant::avx2: return caps.avx2;
    case Variant::avx512: return caps.avx512;
  }
  return false;
}

Variant best_variant() {
  if (variant_supported(Variant::avx512)) return Variant::avx512;
  if (variant_supported(Variant::avx2)) return Variant::avx2;
  return Variant::scalar;
}

namespace {
std::atomic<Variant> g_variant{best_variant()};
std::atomic<int> g_threads{
    std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
}  // namespace

Variant active_variant() { return g_variant.load(); }

void set_variant(Variant v) {
  if (!variant_supported(v))
    fail("kernels-unsupported",
         std::string("kernel variant '") + variant_name(v) + "' not supported on this CPU");
  g_variant.store(v);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::scalar: return "scalar";
    case Variant::avx2: return "avx2";
    case Variant::avx512: return "avx512";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "scalar") return Variant::scalar;
  if (name == "avx2") return Variant::avx2;
  if (name == "avx512") return Variant::avx512;
  if (name == "auto") return best_variant();
  fail("kernels-unknown", "unknown kernel variant '" + name + "'");
}

int threads() { return g_threads.load(); }

void set_threads(int n) { g_threads.store(std::clamp(n, 1, 256)); }

void parallel_ranges(i64 n, const void* ctx, void (*fn)(const void*, i64, i64)) {
  if (n <= 0) return;
  const int want = static_cast<int>(std::min<i64>(threads(), n));
  if (want <= 1 || n < 4096) {
    fn(ctx, 0, n);
    return;
  }
  const i64 chunk = (n + want - 1) / want;
  std::vector<std::thread> pool;
  pool.reserve(want - 1);
  for (int t = 1; t < want; ++t) {
    const i64 b = t * chunk;
    const i64 e = std::min<i64>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, ctx, b, e);
  }
  fn(ctx, 0, std::min<i64>(n, chunk));
  for (auto& th : pool) th.join();
}

#define ISOVOX_DISPATCH(call_scalar, call_avx2, call_avx512) \
  switch (active_variant()) {                                \
    case Variant::scalar: call_scalar; break;                \
    case Variant::avx2: call_avx2; break;                    \
    case Variant::avx512: call_avx512; break;                \
  }

void sgemm_nt(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              const float* bias) {
  ISOVOX_DISPATCH(scalar::gemm_nt(A, B, C, M, N, K, bias),
                  avx2::sgemm_nt(A, B, C, M, N, K, bias),
                  avx512::sgemm_nt(A, B, C, M, N, K, bias));
}

void sgemm_nn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K) {
  ISOVOX_DISPATCH(scalar::gemm_nn(A, B, C, M, N, K), avx2::sgemm_nn(A, B, C, M, N, K),
                  avx512::sgemm_nn(A, B, C, M, N, K));
}

void sgemm_tn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              bool accumulate) {
  ISOVOX_DISPATCH(scalar::gemm_tn(A, B, C, M, N, K, accumulate),
                  avx2::sgemm_tn(A, B, C, M, N, K, accumulate),
                  avx512::sgemm_tn(A, B, C, M, N, K, accumulate));
}

void scolsum(const float* A, float* out, i64 M, i64 N) {
  ISOVOX_DISPATCH(scalar::colsum(A, out, M, N), avx2::scolsum(A, out, M, N),
                  avx512::scolsum(A, out, M, N));
}

void sadd_inplace(float* dst, const float* src, i64 n) {
  ISOVOX_DISPATCH(scalar::add_inplace(dst, src, n), avx2::sadd_inplace(dst, src, n),
                  avx512::sadd_inplace(dst, src, n));
}

void srelu(const float* x, float* y, i64 n) {
  ISOVOX_DISPATCH(scalar::relu(x, y, n), avx2::srelu(x, y, n), avx512::srelu(x, y, n));
}

void srelu_backward(const float* dy, const float* act, float* dx, i64 n, float scale) {
  ISOVOX_DISPATCH(scalar::relu_backward(dy, act, dx, n, scale),
                  avx2::srelu_backward(dy, act, dx, n, scale),
                  avx512::srelu_backward(dy, act, dx, n, scale));
}

void sadam_step(float* w, float* m, float* v, const float* g, i64 n, float lr,
                float beta1, float beta2, float eps, float inv_bc1, float inv_bc2) {
  ISOVOX_DISPATCH(
      scalar::adam_step(w, m, v, g, n, lr, beta1, beta2, eps, inv_bc1, inv_bc2),
      avx2::sadam_step(w, m, v, g, n, lr, beta1, beta2, eps, inv_bc1, inv_bc2),
      avx512::sadam_step(w, m, v, g, n, lr, beta1, beta2, eps, inv_bc1, inv_bc2));
}

#undef ISOVOX_DISPATCH

}  // namespace isovox::simd

namespace isovox::simd {

void transpose_f32(const float* src, float* dst, i64 M, i64 N) {
  constexpr i64 TB = 64;
  struct Ctx {
    const float* src;
    float* dst;
    i64 M, N;
  } ctx{src, dst, M, N};
  const i64 mblocks = (M + TB - 1) / TB;
  parallel_ranges(mblocks, &ctx, [](const void* p, i64 b0, i64 b1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    for (i64 mb = b0 * TB; mb < b1 * TB && mb < c.M; mb += TB) {
      const i64 mend = std::min(c.M, mb + TB);
      for (i64 nb = 0; nb < c.N; nb += TB) {
        const i64 nend = std::min(c.N, nb + TB);
        for (i64 m = mb; m < mend; ++m)
          for (i64 n = nb; n < nend; ++n) c.dst[n * c.M + m] = c.src[m * c.N + n];
      }
    }
  });
}

}  // namespace isovox::simd
