#include <algorithm>
#include <cmath>
#include <vector>

#include "isovox/simd/kernels.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

#include "internal.hpp"

namespace isovox::simd::avx512 {

namespace {

inline __mmask16 tail16(i64 rem) {
  return static_cast<__mmask16>((1u << rem) - 1u);
}

// C[m..m+3][n..n+3] for C = A * B^T; K tail handled with masked loads so the
// lane reduction tree stays uniform.
inline void nt_kernel_4x4(const float* A, const float* B, float* C, i64 N, i64 K,
                          const float* bias, i64 m, i64 n) {
  const float* a[4] = {A + m * K, A + (m + 1) * K, A + (m + 2) * K, A + (m + 3) * K};
  const float* b[4] = {B + n * K, B + (n + 1) * K, B + (n + 2) * K, B + (n + 3) * K};
  __m512 acc[4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) acc[i][j] = _mm512_setzero_ps();
  i64 k = 0;
  for (; k + 16 <= K; k += 16) {
    const __m512 vb0 = _mm512_loadu_ps(b[0] + k);
    const __m512 vb1 = _mm512_loadu_ps(b[1] + k);
    const __m512 vb2 = _mm512_loadu_ps(b[2] + k);
    const __m512 vb3 = _mm512_loadu_ps(b[3] + k);
    for (int i = 0; i < 4; ++i) {
      const __m512 va = _mm512_loadu_ps(a[i] + k);
      acc[i][0] = _mm512_fmadd_ps(va, vb0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_ps(va, vb1, acc[i][1]);
      acc[i][2] = _mm512_fmadd_ps(va, vb2, acc[i][2]);
      acc[i][3] = _mm512_fmadd_ps(va, vb3, acc[i][3]);
    }
  }
  if (k < K) {
    const __mmask16 mk = tail16(K - k);
    const __m512 vb0 = _mm512_maskz_loadu_ps(mk, b[0] + k);
    const __m512 vb1 = _mm512_maskz_loadu_ps(mk, b[1] + k);
    const __m512 vb2 = _mm512_maskz_loadu_ps(mk, b[2] + k);
    const __m512 vb3 = _mm512_maskz_loadu_ps(mk, b[3] + k);
    for (int i = 0; i < 4; ++i) {
      const __m512 va = _mm512_maskz_loadu_ps(mk, a[i] + k);
      acc[i][0] = _mm512_fmadd_ps(va, vb0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_ps(va, vb1, acc[i][1]);
      acc[i][2] = _mm512_fmadd_ps(va, vb2, acc[i][2]);
      acc[i][3] = _mm512_fmadd_ps(va, vb3, acc[i][3]);
    }
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const float e = bias ? bias[n + j] : 0.0f;
      C[(m + i) * N + n + j] = _mm512_reduce_add_ps(acc[i][j]) + e;
    }
}

inline float nt_dot(const float* a, const float* b, i64 K) {
  __m512 acc = _mm512_setzero_ps();
  i64 k = 0;
  for (; k + 16 <= K; k += 16)
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), acc);
  if (k < K) {
    const __mmask16 mk = tail16(K - k);
    acc = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(mk, a + k),
                          _mm512_maskz_loadu_ps(mk, b + k), acc);
  }
  return _mm512_reduce_add_ps(acc);
}

}  // namespace

void sgemm_nt(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              const float* bias) {
  constexpr i64 MC = 256;
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
      for (; n + 4 <= c.N; n += 4) {
        i64 m = mc;
        for (; m + 4 <= mend; m += 4) nt_kernel_4x4(c.A, c.B, c.C, c.N, c.K, c.bias, m, n);
        for (; m < mend; ++m)
          for (i64 j = 0; j < 4; ++j)
            c.C[m * c.N + n + j] = nt_dot(c.A + m * c.K, c.B + (n + j) * c.K, c.K) +
                                   (c.bias ? c.bias[n + j] : 0.0f);
      }
      for (; n < c.N; ++n)
        for (i64 m = mc; m < mend; ++m)
          c.C[m * c.N + n] =
              nt_dot(c.A + m * c.K, c.B + n * c.K, c.K) + (c.bias ? c.bias[n] : 0.0f);
    }
  });
}

namespace {

// C rows m..m+MR-1, columns n0..n0+nw from a packed [K x 32] panel.
// The panel is contiguous, so the inner loop streams it linearly instead of
// striding across one page per k.
template <int MR>
inline void nn_block_packed(const float* A, const float* P, float* C, i64 N, i64 K,
                            i64 m, i64 n0, i64 nw) {
  __m512 acc[MR][2];
  for (int i = 0; i < MR; ++i) acc[i][0] = acc[i][1] = _mm512_setzero_ps();
  const float* p = P;
  for (i64 k = 0; k < K; ++k, p += 32) {
    const __m512 vb0 = _mm512_loadu_ps(p);
    const __m512 vb1 = _mm512_loadu_ps(p + 16);
    _mm_prefetch(reinterpret_cast<const char*>(p + 8 * 32), _MM_HINT_T0);
    for (int i = 0; i < MR; ++i) {
      const __m512 va = _mm512_set1_ps(A[(m + i) * K + k]);
      acc[i][0] = _mm512_fmadd_ps(va, vb0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_ps(va, vb1, acc[i][1]);
    }
  }
  if (nw == 32) {
    for (int i = 0; i < MR; ++i) {
      _mm512_storeu_ps(C + (m + i) * N + n0, acc[i][0]);
      _mm512_storeu_ps(C + (m + i) * N + n0 + 16, acc[i][1]);
    }
  } else {
    const __mmask16 mlo = tail16(std::min<i64>(nw, 16));
    const __mmask16 mhi = nw > 16 ? tail16(nw - 16) : 0;
    for (int i = 0; i < MR; ++i) {
      _mm512_mask_storeu_ps(C + (m + i) * N + n0, mlo, acc[i][0]);
      if (nw > 16) _mm512_mask_storeu_ps(C + (m + i) * N + n0 + 16, mhi, acc[i][1]);
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
    std::vector<float> panel(static_cast<size_t>(c.K) * 32);
    for (i64 n0 = 0; n0 < c.N; n0 += 32) {
      const i64 nw = std::min<i64>(32, c.N - n0);
      for (i64 k = 0; k < c.K; ++k) {
        const float* src = c.B + k * c.N + n0;
        float* dst = panel.data() + k * 32;
        for (i64 j = 0; j < nw; ++j) dst[j] = src[j];
        for (i64 j = nw; j < 32; ++j) dst[j] = 0.0f;
      }
      i64 m = r0;
      for (; m + 6 <= r1; m += 6)
        nn_block_packed<6>(c.A, panel.data(), c.C, c.N, c.K, m, n0, nw);
      for (; m + 2 <= r1; m += 2)
        nn_block_packed<2>(c.A, panel.data(), c.C, c.N, c.K, m, n0, nw);
      for (; m < r1; ++m)
        nn_block_packed<1>(c.A, panel.data(), c.C, c.N, c.K, m, n0, nw);
    }
  });
}

void sgemm_tn(const float* A, const float* B, float* C, i64 M, i64 N, i64 K,
              bool accumulate) {
  // Both operands are k-major; transposing them turns the strided reduction
  // into the row-contiguous dot kernel. Grow-only scratch keeps repeated
  // trainer calls allocation-free (kernel calls are not reentrant).
  static std::vector<float> at_buf, bt_buf;
  at_buf.resize(static_cast<size_t>(M) * K);
  bt_buf.resize(static_cast<size_t>(N) * K);
  transpose_f32(A, at_buf.data(), K, M);
  transpose_f32(B, bt_buf.data(), K, N);
  const float* AT = at_buf.data();
  const float* BT = bt_buf.data();

  constexpr i64 MC = 256;
  struct Ctx {
    const float *AT, *BT;
    float* C;
    i64 M, N, K;
    bool accumulate;
  } ctx{AT, BT, C, M, N, K, accumulate};
  parallel_ranges(M, &ctx, [](const void* p, i64 r0, i64 r1) {
    const Ctx& c = *static_cast<const Ctx*>(p);
    for (i64 mc = r0; mc < r1; mc += MC) {
      const i64 mend = std::min(r1, mc + MC);
      i64 n = 0;
      for (; n + 4 <= c.N; n += 4) {
        i64 m = mc;
        for (; m + 4 <= mend; m += 4) {
          if (c.accumulate) {
            float save[4][4];
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 4; ++j) save[i][j] = c.C[(m + i) * c.N + n + j];
            nt_kernel_4x4(c.AT, c.BT, c.C, c.N, c.K, nullptr, m, n);
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 4; ++j) c.C[(m + i) * c.N + n + j] += save[i][j];
          } else {
            nt_kernel_4x4(c.AT, c.BT, c.C, c.N, c.K, nullptr, m, n);
          }
        }
        for (; m < mend; ++m)
          for (i64 j = 0; j < 4; ++j) {
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
      for (; n + 16 <= n1; n += 16)
        _mm512_storeu_ps(c.out + n,
                         _mm512_add_ps(_mm512_loadu_ps(c.out + n), _mm512_loadu_ps(a + n)));
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
    for (; i + 16 <= i1; i += 16)
      _mm512_storeu_ps(c.dst + i,
                       _mm512_add_ps(_mm512_loadu_ps(c.dst + i), _mm512_loadu_ps(c.src + i)));
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
    const __m512 zero = _mm512_setzero_ps();
    i64 i = i0;
    for (; i + 16 <= i1; i += 16)
      _mm512_storeu_ps(c.y + i, _mm512_max_ps(_mm512_loadu_ps(c.x + i), zero));
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
    const __m512 zero = _mm512_setzero_ps();
    const __m512 vs = _mm512_set1_ps(c.scale);
    i64 i = i0;
    for (; i + 16 <= i1; i += 16) {
      const __mmask16 mask =
          _mm512_cmp_ps_mask(_mm512_loadu_ps(c.act + i), zero, _CMP_GT_OQ);
      const __m512 g = _mm512_mul_ps(_mm512_loadu_ps(c.dy + i), vs);
      _mm512_storeu_ps(c.dx + i, _mm512_maskz_mov_ps(mask, g));
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
    const __m512 b1 = _mm512_set1_ps(c.b1), ob1 = _mm512_set1_ps(1.0f - c.b1);
    const __m512 b2 = _mm512_set1_ps(c.b2), ob2 = _mm512_set1_ps(1.0f - c.b2);
    const __m512 lr = _mm512_set1_ps(c.lr), eps = _mm512_set1_ps(c.eps);
    const __m512 ib1 = _mm512_set1_ps(c.ib1), ib2 = _mm512_set1_ps(c.ib2);
    i64 i = i0;
    for (; i + 16 <= i1; i += 16) {
      const __m512 vg = _mm512_loadu_ps(c.g + i);
      __m512 vm = _mm512_loadu_ps(c.m + i);
      __m512 vv = _mm512_loadu_ps(c.v + i);
      vm = _mm512_fmadd_ps(b1, vm, _mm512_mul_ps(ob1, vg));
      vv = _mm512_fmadd_ps(b2, vv, _mm512_mul_ps(ob2, _mm512_mul_ps(vg, vg)));
      _mm512_storeu_ps(c.m + i, vm);
      _mm512_storeu_ps(c.v + i, vv);
      const __m512 mhat = _mm512_mul_ps(vm, ib1);
      const __m512 vhat = _mm512_mul_ps(vv, ib2);
      const __m512 denom = _mm512_add_ps(_mm512_sqrt_ps(vhat), eps);
      const __m512 upd = _mm512_div_ps(_mm512_mul_ps(lr, mhat), denom);
      _mm512_storeu_ps(c.w + i, _mm512_sub_ps(_mm512_loadu_ps(c.w + i), upd));
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

}  // namespace isovox::simd::avx512

#else  // non-x86 fallback: route to the scalar reference

namespace isovox::simd::avx512 {
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
}  // namespace isovox::simd::avx512

#endif
