// Micro-benchmark for the dense kernels at the batch shapes the trainer uses.
// Not part of the test suite; handy when tuning tile/block sizes.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "isovox/rng.hpp"
#include "isovox/simd/kernels.hpp"

using namespace isovox;
namespace k = isovox::simd;
using k::i64;

static double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

static void fill(std::vector<float>& v, Rng& rng) {
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
}

int main(int argc, char** argv) {
  const i64 M = argc > 1 ? std::atoll(argv[1]) : 10000;
  const i64 N = 1024, K = 1024;
  Rng rng(7);
  std::vector<float> A(M * K), B(N * K), C(M * N), bias(N, 0.1f);
  fill(A, rng);
  fill(B, rng);

  for (k::Variant v : {k::Variant::scalar, k::Variant::avx2, k::Variant::avx512}) {
    if (!k::variant_supported(v)) continue;
    k::set_variant(v);
    const int reps = v == k::Variant::scalar ? 1 : 8;
    const double flops = 2.0 * M * N * K * reps;

    double t0 = now_s();
    for (int r = 0; r < reps; ++r) k::sgemm_nt(A.data(), B.data(), C.data(), M, N, K, bias.data());
    double t1 = now_s();
    std::printf("%-7s nt  %7.1f ms  %6.1f GFLOP/s\n", k::variant_name(v),
                1e3 * (t1 - t0) / reps, flops / (t1 - t0) / 1e9);

    t0 = now_s();
    for (int r = 0; r < reps; ++r) k::sgemm_nn(A.data(), B.data(), C.data(), M, N, K);
    t1 = now_s();
    std::printf("%-7s nn  %7.1f ms  %6.1f GFLOP/s\n", k::variant_name(v),
                1e3 * (t1 - t0) / reps, flops / (t1 - t0) / 1e9);

    // tn with the batch as the reduction axis: both operands are [M x 1024].
    t0 = now_s();
    for (int r = 0; r < reps; ++r)
      k::sgemm_tn(A.data(), A.data(), C.data(), K, N, M, false);
    t1 = now_s();
    std::printf("%-7s tn  %7.1f ms  %6.1f GFLOP/s\n", k::variant_name(v),
                1e3 * (t1 - t0) / reps, flops / (t1 - t0) / 1e9);
  }
  return 0;
}
