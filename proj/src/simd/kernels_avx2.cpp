#include <algorithm>
#include <cmath>

#include "isovox/simd/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <vector>

#include "internal.hpp"

namespace isovox::simd::avx2 {

namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehl_ps(lo, lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

alignas(32) constexpr std::int32_t kTailMask[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                    0,  0,  0,  0,  0,  0,  0,  0};

inline __m256i tail_mask(i64 rem) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kTailMask + 8 - rem));
}

// C[m..m+3][n..n+1] for C = A * B^T
inline void nt_kernel_4x2(const float* A, const float* B, float* C, i64 N, i64 K,
                          const float* bias, i64 m, i64 n) {
  const float* a0 = A + m * K;
  const float* a1 = a0 + K;
  const float* a2 = a1 + K;
  const float* a3 = a2 + K;
  const float* b0 = B + n * K;
  const float* b1 = b0 + K;
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  i64 k = 0;
  for (; k + 8 <= K; k += 8) {
    const __m256 vb0 = _mm256_loadu_ps(b0 + k);
    const __m256 vb1 = _mm256_loadu_ps(b1 + k);
    __m256 va = _mm256_loadu_ps(a0 + k);
    c00 = _mm256_fmadd_ps(va, vb0, c00);
    c01 = _mm256_fmadd_ps(va, vb1, c01);
    va = _mm256_loadu_ps(a1 + k);
    c10 = _mm256_fmadd_ps(va, vb0, c10);
    c11 = _mm256_fmadd_ps(va, vb1, c11);
    va = _mm256_loadu_ps(a2 + k);
    c20 = _mm256_fmadd_ps(va, vb0, c20);
    c21 = _mm256_fmadd_ps(va, vb1, c21);
    va = _mm256_loadu_ps(a3 + k);
    c30 = _mm256_fmadd_ps(va, vb0, c30);
    c31 = _mm256_fmadd_ps(va, vb1, c31);
  }
  float s00 = hsum256(c00), s01 = hsum256(c01);
  float s10 = hsum256(c10), s11 = hsum256(c11);
  float s20 = hsum256(c20), s21 = hsum256(c21);
  float s30 = hsum256(c30), s31 = hsum256(c31);
  for (; k < K; ++k) {
    s00 += a0[k] * b0[k];
    s01 += a0[k] * b1[k];
    s10 += a1[k] * b0[k];
    s11 += a1[k] * b1[k];
    s20 += a2[k] * b0[k];
    s21 += a2[k] * b1[k];
    s30 += a3[k] * b0[k];
    s31 += a3[k] * b1[k];
  }
  const float e0 = bias ? bias[n] : 0.0f;
  const float e1 = bias ? bias[n + 1] : 0.0f;
  C[(m + 0) * N + n] = s00 + e0;
  C[(m + 0) * N + n + 1] = s01 + e1;
  C[(m + 1) * N + n] = s10 + e0;
  C[(m + 1) * N + n + 1] = s11 + e1;
  C[(m + 2) * N + n] = s20 + e0;
  C[(m + 2) * N + n + 1] = s21 + e1;
  C[(m + 3) * N + n] = s30 + e0;
  C[(m + 3) * N + n + 1] = s31 + e1;
}

inline float nt_dot(const float* a, const float* b, i64 K) {
  __m256 acc = _mm256_setzero_ps();
  i64 k = 0;
  for (; k + 8 <= K; k += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc);
  float s = hsum256(acc);
  for (; k < K; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

void sgemm_nt(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              const float* bias) {
  constexpr i64 MC = 256;  // A panel rows kept hot in L2
  struct Ctx {
    const float *A, *B, *bias;
    float* C;
    i64 M, N, K;
  } ctx{A, B, bias, C, M, N, K};
  parallel_ranges(M, &ctx, [](const void* p, i64 r0, i64 r1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    for (i64 mc = r0; mc < r1; mc += MC) {
      const i64 mend = std::min(r1, mc + MC);
      i64 n = 0;
      for (; n + 2 <= c.N; n += 2) {
        i64 m = mc;
        for (; m + 4 <= mend; m += 4) nt_kernel_4x2(c.A, c.B, c.C, c.N, c.K, c.bias, m, n);
        for (; m < mend; ++m) {
          const float* a = c.A + m * c.K;
          c.C[m * c.N + n] = nt_dot(a, c.B + n * c.K, c.K) + (c.bias ? c.bias[n] : 0.0f);
          c.C[m * c.N + n + 1] =
              nt_dot(a, c.B + (n + 1) * c.K, c.K) + (c.bias ? c.bias[n + 1] : 0.0f);
        }
      }
      if (n < c.N) {
        for (i64 m = mc; m < mend; ++m)
          c.C[m * c.N + n] =
              nt_dot(c.A + m * c.K, c.B + n * c.K, c.K) + (c.bias ? c.bias[n] : 0.0f);
      }
    }
  });
}

namespace {

// C rows m..m+MR-1 over a packed [K x 16] panel (contiguous stream).
template <int MR>
inline void nn_block_packed(const float* A, const float* P, float* C, i64 N, i64 K,
                            i64 m, i64 n0, i64 nw) {
  __m256 acc[MR][2];
  for (int i = 0; i < MR; ++i) acc[i][0] = acc[i][1] = _mm256_setzero_ps();
  const float* p = P;
  for (i64 k = 0; k < K; ++k, p += 16) {
    const __m256 vb0 = _mm256_loadu_ps(p);
    const __m256 vb1 = _mm256_loadu_ps(p + 8);
    for (int i = 0; i < MR; ++i) {
      const __m256 va = _mm256_set1_ps(A[(m + i) * K + k]);
      acc[i][0] = _mm256_fmadd_ps(va, vb0, acc[i][0]);
      acc[i][1] = _mm256_fmadd_ps(va, vb1, acc[i][1]);
    }
  }
  if (nw == 16) {
    for (int i = 0; i < MR; ++i) {
      _mm256_storeu_ps(C + (m + i) * N + n0, acc[i][0]);
      _mm256_storeu_ps(C + (m + i) * N + n0 + 8, acc[i][1]);
    }
  } else {
    const __m256i mlo = tail_mask(std::min<i64>(nw, 8));
    const __m256i mhi = nw > 8 ? tail_mask(nw - 8) : _mm256_setzero_si256();
    for (int i = 0; i < MR; ++i) {
      _mm256_maskstore_ps(C + (m + i) * N + n0, mlo, acc[i][0]);
      if (nw > 8) _mm256_maskstore_ps(C + (m + i) * N + n0 + 8, mhi, acc[i][1]);
    }
  }
}

}  // namespace

void sgemm_nn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K) {
  struct Ctx {
    const float *A, *B;
    float* C;
    i64 M, N, K;
  } ctx{A, B, C, M, N, K};
  parallel_ranges(M, &ctx, [](const void* p, i64 r0, i64 r1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    std::vector<float> panel(static_cast<size_t>(c.K) * 16);
    for (i64 n0 = 0; n0 < c.N; n0 += 16) {
      const i64 nw = std::min<i64>(16, c.N - n0);
      for (i64 k = 0; k < c.K; ++k) {
        const float* src = c.B + k * c.N + n0;
        float* dst = panel.data() + k * 16;
        for (i64 j = 0; j < nw; ++j) dst[j] = src[j];
        for (i64 j = nw; j < 16; ++j) dst[j] = 0.0f;
      }
      i64 m = r0;
      for (; m + 4 <= r1; m += 4)
        nn_block_packed<4>(c.A, panel.data(), c.C, c.N, c.K, m, n0, nw);
      for (; m < r1; ++m)
        nn_block_packed<1>(c.A, panel.data(), c.C, c.N, c.K, m, n0, nw);
    }
  });
}

void sgemm_tn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              bool accumulate) {
  // Transpose both k-major operands, then run the contiguous dot kernel.
  // Grow-only scratch; kernel calls are not reentrant.
  static std::vector<float> at_buf, bt_buf;
  at_buf.resize(static_cast<size_t>(M) * K);
  bt_buf.resize(static_cast<size_t>(N) * K);
  transpose_f32(A, at_buf.data(), K, M);
  transpose_f32(B, bt_buf.data(), K, N);

  constexpr i64 MC = 256;
  struct Ctx {
    const float *AT, *BT;
    float* C;
    i64 M, N, K;
    bool accumulate;
  } ctx{at_buf.data(), bt_buf.data(), C, M, N, K, accumulate};
  parallel_ranges(M, &ctx, [](const void* p, i64 r0, i64 r1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    for (i64 mc = r0; mc < r1; mc += MC) {
      const i64 mend = std::min(r1, mc + MC);
      i64 n = 0;
      for (; n + 2 <= c.N; n += 2) {
        i64 m = mc;
        for (; m + 4 <= mend; m += 4) {
          if (c.accumulate) {
            float save[4][2];
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 2; ++j) save[i][j] = c.C[(m + i) * c.N + n + j];
            nt_kernel_4x2(c.AT, c.BT, c.C, c.N, c.K, nullptr, m, n);
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 2; ++j) c.C[(m + i) * c.N + n + j] += save[i][j];
          } else {
            nt_kernel_4x2(c.AT, c.BT, c.C, c.N, c.K, nullptr, m, n);
          }
        }
        for (; m < mend; ++m)
          for (i64 j = 0; j < 2; ++j) {
            const float d = nt_dot(c.AT + m * c.K, c.BT + (n + j) * c.K, c.K);
            float& out = c.C[m * c.N + n + j];
            out = c.accumulate ? out + d : d;
          }
      }
      for (; n < c.N; ++n)
        for (i64 m = mc; m < mend; ++m) {
          const float d = nt_dot(c.AT + m * c.K, c.BT + n * c.K, c.K);
          float& out = c.C[m * c.N + n];
          out = c.accumulate ? out + d : d;
        }
    }
  });
}

void scolsum(const float* A, float* out, i64 M, i64 N) {
  struct Ctx {
    const float* A;
    float* out;
    i64 M, N;
  } ctx{A, out, M, N};
  parallel_ranges(N, &ctx, [](const void* p, i64 n0, i64 n1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    for (i64 n = n0; n < n1; ++n) c.out[n] = 0.0f;
    for (i64 m = 0; m < c.M; ++m) {
      const float* a = c.A + m * c.N;
      i64 n = n0;
      for (; n + 8 <= n1; n += 8)
        _mm256_storeu_ps(c.out + n,
                         _mm256_add_ps(_mm256_loadu_ps(c.out + n), _mm256_loadu_ps(a + n)));
      for (; n < n1; ++n) c.out[n] += a[n];
    }
  });
}

void sadd_inplace(float* dst, const float* src, i64 n) {
  struct Ctx {
    float* dst;
    const float* src;
  } ctx{dst, src};
  parallel_ranges(n, &ctx, [](const void* p, i64 i0, i64 i1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    i64 i = i0;
    for (; i + 8 <= i1; i += 8)
      _mm256_storeu_ps(c.dst + i,
                       _mm256_add_ps(_mm256_loadu_ps(c.dst + i), _mm256_loadu_ps(c.src + i)));
    for (; i < i1; ++i) c.dst[i] += c.src[i];
  });
}

void srelu(const float* x, float* y, i64 n) {
  struct Ctx {
    const float* x;
    float* y;
  } ctx{x, y};
  parallel_ranges(n, &ctx, [](const void* p, i64 i0, i64 i1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    const __m256 zero = _mm256_setzero_ps();
    i64 i = i0;
    for (; i + 8 <= i1; i += 8)
      _mm256_storeu_ps(c.y + i, _mm256_max_ps(_mm256_loadu_ps(c.x + i), zero));
    for (; i < i1; ++i) c.y[i] = c.x[i] > 0.0f ? c.x[i] : 0.0f;
  });
}

void srelu_backward(const float* dy, const float* act, float* dx, i64 n, float scale) {
  struct Ctx {
    const float *dy, *act;
    float* dx;
    float scale;
  } ctx{dy, act, dx, scale};
  parallel_ranges(n, &ctx, [](const void* p, i64 i0, i64 i1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    const __m256 zero = _mm256_setzero_ps();
    const __m256 vs = _mm256_set1_ps(c.scale);
    i64 i = i0;
    for (; i + 8 <= i1; i += 8) {
      const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(c.act + i), zero, _CMP_GT_OQ);
      const __m256 g = _mm256_mul_ps(_mm256_loadu_ps(c.dy + i), vs);
      _mm256_storeu_ps(c.dx + i, _mm256_and_ps(mask, g));
    }
    for (; i < i1; ++i) c.dx[i] = c.act[i] > 0.0f ? c.dy[i] * c.scale : 0.0f;
  });
}

void sadam_step(float* w, float* m, float* v, const float* g, i64 n, float lr,
                float beta1, float beta2, float eps, float inv_bc1, float inv_bc2) {
  struct Ctx {
    float *w, *m, *v;
    const float* g;
    float lr, b1, b2, eps, ib1, ib2;
  } ctx{w, m, v, g, lr, beta1, beta2, eps, inv_bc1, inv_bc2};
  parallel_ranges(n, &ctx, [](const void* p, i64 i0, i64 i1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    const __m256 b1 = _mm256_set1_ps(c.b1), ob1 = _mm256_set1_ps(1.0f - c.b1);
    const __m256 b2 = _mm256_set1_ps(c.b2), ob2 = _mm256_set1_ps(1.0f - c.b2);
    const __m256 lr = _mm256_set1_ps(c.lr), eps = _mm256_set1_ps(c.eps);
    const __m256 ib1 = _mm256_set1_ps(c.ib1), ib2 = _mm256_set1_ps(c.ib2);
    i64 i = i0;
    for (; i + 8 <= i1; i += 8) {
      const __m256 vg = _mm256_loadu_ps(c.g + i);
      __m256 vm = _mm256_loadu_ps(c.m + i);
      __m256 vv = _mm256_loadu_ps(c.v + i);
      vm = _mm256_fmadd_ps(b1, vm, _mm256_mul_ps(ob1, vg));
      vv = _mm256_fmadd_ps(b2, vv, _mm256_mul_ps(ob2, _mm256_mul_ps(vg, vg)));
      _mm256_storeu_ps(c.m + i, vm);
      _mm256_storeu_ps(c.v + i, vv);
      const __m256 mhat = _mm256_mul_ps(vm, ib1);
      const __m256 vhat = _mm256_mul_ps(vv, ib2);
      const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), eps);
      const __m256 upd = _mm256_div_ps(_mm256_mul_ps(lr, mhat), denom);
      _mm256_storeu_ps(c.w + i, _mm256_sub_ps(_mm256_loadu_ps(c.w + i), upd));
    }
    for (; i < i1; ++i) {
      c.m[i] = c.b1 * c.m[i] + (1.0f - c.b1) * c.g[i];
      c.v[i] = c.b2 * c.v[i] + (1.0f - c.b2) * c.g[i] * c.g[i];
      const float mhat = c.m[i] * c.ib1;
      const float vhat = c.v[i] * c.ib2;
      c.w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  });
}

}  // namespace isovox::simd::avx2

#else  // non-x86 fallback: route to the scalar reference

namespace isovox::simd::avx2 {
void sgemm_nt(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              const float* bias) {
  scalar::gemm_nt(A, B, C, M, N, K, bias);
}
void sgemm_nn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K) {
  scalar::gemm_nn(A, B, C, M, N, K);
}
void sgemm_tn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K, bool acc) {
  scalar::gemm_tn(A, B, C, M, N, K, acc);
}
void scolsum(const float* A, float* out, i64 M, i64 N) { scalar::colsum(A, out, M, N); }
void sadd_inplace(float* dst, const float* src, i64 n) { scalar::add_inplace(dst, src, n); }
void srelu(const float* x, float* y, i64 n) { scalar::relu(x, y, n); }
void srelu_backward(const float* dy, const float* act, float* dx, i64 n, float s) {
  scalar::relu_backward(dy, act, dx, n, s);
}
void sadam_step(float* w, float* m, float* v, const float* g, i64 n, float lr, float b1,
                float b2, float eps, float i1, float i2) {
  scalar::adam_step(w, m, v, g, n, lr, b1, b2, eps, i1, i2);
}
}  // namespace isovox::simd::avx2

#endif
