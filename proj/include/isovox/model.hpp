#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isovox/common.hpp"
#include "isovox/rng.hpp"
#include "isovox/volume.hpp"

namespace isovox {

// Coordinate network: 512 Fourier features -> 5 shared 1024-wide layers
// (ReLU + inverted dropout) -> three two-layer heads. The T1w/T2w intensity
// heads hang off the last shared layer, the segmentation head off the first.
// Math is templated so the gradient oracle can run the same code in double.

struct ModelArch {
  i64 fourier_rows = 256;
  i64 trunk_width = 1024;
  i64 n_labels = 0;
  i64 feature_count() const { return 2 * fourier_rows; }
};

/// Maps voxel index 0 -> -1 and dims-1 -> +1 per axis. dims must be >= 2.
Vec3 normalize_coords(const Index3& index, const Index3& dims);

/// Shared physical->normalized mapping used by both patches and by grid
/// sampling: lo/hi are the reference voxel-center bounds projected onto the
/// direction axes, and map to -1/+1.
struct NormFrame {
  double direction[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  Vec3 lo{0, 0, 0};
  Vec3 hi{1, 1, 1};

  Vec3 axis(int a) const { return {direction[0][a], direction[1][a], direction[2][a]}; }
  Vec3 to_normalized(const Vec3& physical) const {
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
      const double u = dot(axis(a), physical);
      n[a] = hi[a] > lo[a] ? 2.0 * (u - lo[a]) / (hi[a] - lo[a]) - 1.0 : 0.0;
    }
    return n;
  }
  static NormFrame from_grid(const GridGeometry& g);
};

template <typename T>
struct FourierEncoder {
  i64 rows = 0;
  double sigma_b = 10.0;
  std::vector<T> b;  // [rows x 3], frozen after construction

  // out[0..rows) = cos(2 pi B x), out[rows..2 rows) = sin(2 pi B x)
  void encode(const T* xyz, T* out) const;
};

template <typename T>
struct DenseLayer {
  i64 in = 0, out = 0;
  std::vector<T> w;  // [out x in]
  std::vector<T> b;  // [out]
  void resize(i64 in_dim, i64 out_dim) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<std::size_t>(in_dim) * out_dim, T(0));
    b.assign(static_cast<std::size_t>(out_dim), T(0));
  }
};

template <typename T>
struct MlpWeights {
  std::array<DenseLayer<T>, 5> shared;
  DenseLayer<T> t1_hidden, t1_out, t2_hidden, t2_out, seg_hidden, seg_out;

  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& l : shared) f(l);
    f(t1_hidden);
    f(t1_out);
    f(t2_hidden);
    f(t2_out);
    f(seg_hidden);
    f(seg_out);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& l : shared) f(l);
    f(t1_hidden);
    f(t1_out);
    f(t2_hidden);
    f(t2_out);
    f(seg_hidden);
    f(seg_out);
  }
};

struct IntensityNorm {
  double t1_min = 0, t1_max = 1;
  double t2_min = 0, t2_max = 1;
};

template <typename T>
struct InrModel {
  ModelArch arch;
  FourierEncoder<T> encoder;
  MlpWeights<T> weights;
  LabelTable label_table;
  IntensityNorm norm;
  NormFrame frame;
  GridGeometry t1_geom, t2_geom;
  std::uint64_t seed = 0;
  double dropout_p = 0.1;

  void validate() const;
};

template <typename T>
InrModel<T> init_model(const ModelArch& arch, const LabelTable& table,
                       const IntensityNorm& norm, const NormFrame& frame,
                       const GridGeometry& t1_geom, const GridGeometry& t2_geom,
                       std::uint64_t seed, double sigma_b, double dropout_p);

// Counter-based dropout stream: a fixed function of (seed, step, layer,
// element), so masks are reproducible and independent of evaluation order.
inline bool dropout_keep(std::uint64_t dropout_seed, std::uint64_t step, int layer,
                         i64 elem, double p) {
  const std::uint64_t h =
      mix64(dropout_seed ^ mix64(step) ^
            mix64((static_cast<std::uint64_t>(layer) << 56) + static_cast<std::uint64_t>(elem)));
  const double scaled = p * 18446744073709551616.0;  // p * 2^64
  const std::uint64_t thresh =
      scaled >= 18446744073709551615.0 ? ~0ULL : static_cast<std::uint64_t>(scaled);
  return h >= thresh;
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}
constexpr std::uint64_t kSeedTagEncoder = 0xB1;
constexpr std::uint64_t kSeedTagWeights = 0xB2;
constexpr std::uint64_t kSeedTagDropout = 0xB3;
constexpr std::uint64_t kSeedTagShuffle = 0xB4;

/// Row layout of one batch: T1-supervised rows then T2-supervised rows, each
/// range contiguous (ranges may coincide for whole-batch inference).
struct HeadRanges {
  i64 t1_begin = 0, t1_end = 0;
  i64 t2_begin = 0, t2_end = 0;
  i64 n1() const { return t1_end - t1_begin; }
  i64 n2() const { return t2_end - t2_begin; }
};

template <typename T>
struct BatchBuffers {
  i64 rows = 0;
  std::vector<T> x0;                  // encoded features [M x F]
  std::array<std::vector<T>, 5> act;  // trunk post-activations [M x W]
  std::vector<T> h_t1, h_t2, h_seg;   // head hidden activations
  std::vector<T> p_t1, p_t2;          // [n1], [n2]
  std::vector<T> p_seg;               // sigmoid outputs [n2 x N]
  std::vector<T> g_a, g_b, g_head, g_seg_a1;

  void ensure(i64 batch_rows, const ModelArch& arch);
};

/// Trunk + heads over pre-encoded features in bb.x0 (bb must be ensure()d).
/// With training set, inverted dropout runs on the shared-layer activations
/// using the model's dropout stream at `step`.
template <typename T>
void forward_encoded(const InrModel<T>& m, i64 batch_rows, const HeadRanges& hr,
                     bool training, std::uint64_t step, BatchBuffers<T>& bb);

/// Convenience op: encode coordinates, run all heads over every row.
template <typename T>
void forward(const InrModel<T>& m, const T* coords, i64 batch_rows, bool training,
             std::uint64_t step, std::vector<T>& t1_pred, std::vector<T>& t2_pred,
             std::vector<T>& seg_pred);

struct LossParts {
  double mse_t1 = 0, mse_t2 = 0, bce = 0;
  i64 n1 = 0, n2 = 0;
  double sum_total() const { return mse_t1 + mse_t2 + bce; }
  // Per-term means keep the learning rate batch-size invariant.
  double batch_mean_total() const {
    double l = 0;
    if (n1 > 0) l += mse_t1 / static_cast<double>(n1);
    if (n2 > 0) l += (mse_t2 + bce) / static_cast<double>(n2);
    return l;
  }
};

constexpr double kBceClamp = 1e-7;

/// Summed-form loss terms over the batch (predictions already in bb).
/// Sigmoid outputs are clamped to [eps, 1-eps] before the logs.
template <typename T>
LossParts compute_loss(const InrModel<T>& m, const BatchBuffers<T>& bb,
                       const HeadRanges& hr, const T* t1_truth, const T* t2_truth,
                       const std::uint8_t* onehot);

template <typename T>
struct Gradients {
  MlpWeights<T> g;
  void ensure(const ModelArch& arch);
};

/// Exact reverse-mode gradients of the batch-mean loss for every trainable
/// parameter (the Fourier matrix is frozen). Requires the forward_encoded
/// buffers from the same step; t1/t2 row ranges must be disjoint.
template <typename T>
void backward_batch(const InrModel<T>& m, BatchBuffers<T>& bb, const HeadRanges& hr,
                    bool training, const T* t1_truth, const T* t2_truth,
                    const std::uint8_t* onehot, Gradients<T>& grads);

template <typename T>
struct AdamState {
  MlpWeights<T> m, v;
  i64 t = 0;
  void ensure(const ModelArch& arch);
};

template <typename T>
void adam_step(InrModel<T>& model, const Gradients<T>& grads, AdamState<T>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// "INRM" container: magic, version, JSON metadata block, then raw
// little-endian float32 tensors in declared order (B, shared layers, heads).
void save_model(const InrModel<float>& m, const std::string& path);
InrModel<float> load_model(const std::string& path);

}  // namespace isovox
