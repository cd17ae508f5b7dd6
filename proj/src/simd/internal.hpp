#pragma once

#include "isovox/simd/kernels.hpp"

namespace isovox::simd {

// dst[N x M] = src[M x N]^T, tiled to stay TLB/cache friendly. Parallel inside.
void transpose_f32(const float* src, float* dst, i64 M, i64 N);

}  // namespace isovox::simd
