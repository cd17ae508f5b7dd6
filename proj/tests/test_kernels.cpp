#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

#include "isovox/rng.hpp"
#include "isovox/simd/kernels.hpp"

using namespace isovox;
namespace k = isovox::simd;
using k::i64;

namespace {

std::vector<float> random_vec(Rng& rng, i64 n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<double> widen(const std::vector<float>& v) {
  return {v.begin(), v.end()};
}

// |x - ref| <= tol * (|A| |B| row-dot + 1), the natural fp32 accumulation scale.
void check_close(const std::vector<float>& got, const std::vector<double>& ref,
                 double scale, double tol = 1e-5) {
  REQUIRE(got.size() == ref.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CAPTURE(i);
    REQUIRE(std::abs(static_cast<double>(got[i]) - ref[i]) <= tol * (scale + 1.0));
  }
}

struct Shape {
  i64 M, N, K;
};

}  // namespace

TEST_CASE("gemm variants match the double-precision reference") {
  Rng rng(2024);
  const std::vector<Shape> shapes = {{7, 5, 9},     {64, 32, 48},  {33, 17, 129},
                                     {128, 257, 96}, {10, 1, 1024}, {257, 3, 1000},
                                     {100, 31, 1},  {1, 1, 1}};
  for (const auto& s : shapes) {
    CAPTURE(s.M);
    CAPTURE(s.N);
    CAPTURE(s.K);
    const auto A = random_vec(rng, s.M * s.K);
    const auto Bt = random_vec(rng, s.N * s.K);   // for nt: [N x K]
    const auto Bn = random_vec(rng, s.K * s.N);   // for nn/tn: [K x N]
    const auto At = random_vec(rng, s.K * s.M);   // for tn: [K x M]
    const auto bias = random_vec(rng, s.N);

    std::vector<double> ref_nt(s.M * s.N), ref_nn(s.M * s.N), ref_tn(s.M * s.N);
    const auto Ad = widen(A), Btd = widen(Bt), Bnd = widen(Bn), Atd = widen(At),
               biasd = widen(bias);
    k::scalar::gemm_nt(Ad.data(), Btd.data(), ref_nt.data(), s.M, s.N, s.K, biasd.data());
    k::scalar::gemm_nn(Ad.data(), Bnd.data(), ref_nn.data(), s.M, s.N, s.K);
    k::scalar::gemm_tn(Atd.data(), Bnd.data(), ref_tn.data(), s.M, s.N, s.K, false);

    const double scale = static_cast<double>(s.K);  // |entries| <= 1
    for (const k::Variant v :
         {k::Variant::scalar, k::Variant::avx2, k::Variant::avx512}) {
      if (!k::variant_supported(v)) continue;
      CAPTURE(k::variant_name(v));
      k::set_variant(v);
      std::vector<float> c(s.M * s.N);
      k::sgemm_nt(A.data(), Bt.data(), c.data(), s.M, s.N, s.K, bias.data());
      check_close(c, ref_nt, scale);
      k::sgemm_nn(A.data(), Bn.data(), c.data(), s.M, s.N, s.K);
      check_close(c, ref_nn, scale);
      std::fill(c.begin(), c.end(), 0.5f);
      k::sgemm_tn(At.data(), Bn.data(), c.data(), s.M, s.N, s.K, true);
      std::vector<double> ref_acc(ref_tn);
      for (auto& x : ref_acc) x += 0.5;
      check_close(c, ref_acc, scale);
      k::sgemm_tn(At.data(), Bn.data(), c.data(), s.M, s.N, s.K, false);
      check_close(c, ref_tn, scale);
    }
  }
  k::set_variant(k::best_variant());
}

TEST_CASE("results are bitwise invariant to the thread count") {
  Rng rng(7);
  const i64 M = 123, N = 77, K = 257;
  const auto A = random_vec(rng, M * K);
  const auto B = random_vec(rng, N * K);
  const auto Bn = random_vec(rng, K * N);
  for (const k::Variant v : {k::Variant::scalar, k::Variant::avx2, k::Variant::avx512}) {
    if (!k::variant_supported(v)) continue;
    k::set_variant(v);
    std::vector<float> c1(M * N), c2(M * N), d1(K * N), d2(K * N);
    k::set_threads(1);
    k::sgemm_nt(A.data(), B.data(), c1.data(), M, N, K, nullptr);
    k::sgemm_tn(A.data(), Bn.data(), d1.data(), K, N, M, false);
    k::set_threads(4);
    k::sgemm_nt(A.data(), B.data(), c2.data(), M, N, K, nullptr);
    k::sgemm_tn(A.data(), Bn.data(), d2.data(), K, N, M, false);
    CHECK(c1 == c2);
    CHECK(std::equal(d1.begin(), d1.begin() + K * N, d2.begin()));
  }
  k::set_threads(std::max(1u, std::thread::hardware_concurrency()));
  k::set_variant(k::best_variant());
}

TEST_CASE("elementwise kernels agree across variants") {
  Rng rng(99);
  const i64 n = 1000 + 13;
  const auto x = random_vec(rng, n);
  const auto dy = random_vec(rng, n);
  const auto g = random_vec(rng, n);

  std::vector<float> relu_ref(n), bwd_ref(n);
  k::scalar::relu(x.data(), relu_ref.data(), n);
  k::scalar::relu_backward(dy.data(), x.data(), bwd_ref.data(), n, 1.25f);
  std::vector<float> w_ref = random_vec(rng, n), m_ref(n, 0.0f), v_ref(n, 0.0f);
  const auto w0 = w_ref;
  k::scalar::adam_step(w_ref.data(), m_ref.data(), v_ref.data(), g.data(), n, 1e-3f,
                       0.9f, 0.999f, 1e-8f, 10.0f, 1000.0f);

  for (const k::Variant v : {k::Variant::avx2, k::Variant::avx512}) {
    if (!k::variant_supported(v)) continue;
    CAPTURE(k::variant_name(v));
    k::set_variant(v);
    std::vector<float> out(n);
    k::srelu(x.data(), out.data(), n);
    CHECK(out == relu_ref);
    k::srelu_backward(dy.data(), x.data(), out.data(), n, 1.25f);
    for (i64 i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(bwd_ref[i]).epsilon(1e-6));
    std::vector<float> w = w0, mm(n, 0.0f), vv(n, 0.0f);
    k::sadam_step(w.data(), mm.data(), vv.data(), g.data(), n, 1e-3f, 0.9f, 0.999f,
                  1e-8f, 10.0f, 1000.0f);
    for (i64 i = 0; i < n; ++i) CHECK(w[i] == doctest::Approx(w_ref[i]).epsilon(1e-5));
  }
  k::set_variant(k::best_variant());
}

TEST_CASE("colsum and add_inplace") {
  Rng rng(5);
  const i64 M = 37, N = 53;
  const auto A = random_vec(rng, M * N);
  std::vector<double> ref(N, 0.0);
  for (i64 m = 0; m < M; ++m)
    for (i64 n = 0; n < N; ++n) ref[n] += A[m * N + n];
  for (const k::Variant v : {k::Variant::scalar, k::Variant::avx2, k::Variant::avx512}) {
    if (!k::variant_supported(v)) continue;
    k::set_variant(v);
    std::vector<float> out(N);
    k::scolsum(A.data(), out.data(), M, N);
    check_close(out, ref, M);
    std::vector<float> dst(N, 1.0f);
    k::sadd_inplace(dst.data(), out.data(), N);
    for (i64 n = 0; n < N; ++n) CHECK(dst[n] == doctest::Approx(1.0f + out[n]));
  }
  k::set_variant(k::best_variant());
}

TEST_CASE("adam identities") {
  // zero gradient leaves parameters unchanged
  std::vector<float> w = {1.0f, -2.0f, 3.0f}, m(3, 0.0f), v(3, 0.0f), g(3, 0.0f);
  const auto w0 = w;
  k::sadam_step(w.data(), m.data(), v.data(), g.data(), 3, 1e-2f, 0.9f, 0.999f, 1e-8f,
                10.0f, 1000.0f);
  CHECK(w == w0);

  // first bias-corrected step moves each weight by ~lr * sign(g)
  std::vector<float> w2 = {0.0f, 0.0f}, m2(2, 0.0f), v2(2, 0.0f);
  std::vector<float> g2 = {0.37f, -1.4f};
  const float lr = 1e-3f;
  const float ib1 = 1.0f / (1.0f - 0.9f);
  const float ib2 = 1.0f / (1.0f - 0.999f);
  k::sadam_step(w2.data(), m2.data(), v2.data(), g2.data(), 2, lr, 0.9f, 0.999f, 1e-8f,
                ib1, ib2);
  CHECK(w2[0] == doctest::Approx(-lr).epsilon(1e-3));
  CHECK(w2[1] == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("deterministic rng building blocks") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng g(7);
  double mean = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += g.gaussian();
  mean /= n;
  CHECK(std::abs(mean) < 0.05);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  Rng s1(3), s2(3);
  auto p1 = perm, p2 = perm;
  s1.shuffle(p1);
  s2.shuffle(p2);
  CHECK(p1 == p2);
  std::sort(p1.begin(), p1.end());
  CHECK(p1 == perm);
}
