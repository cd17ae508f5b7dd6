#include "isovox/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "isovox/simd/kernels.hpp"

namespace isovox {

Vec3 normalize_coords(const Index3& index, const Index3& dims) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    require(dims[a] >= 2, "bad-dims", "normalize_coords needs dims >= 2 per axis");
    require(index[a] >= 0 && index[a] < dims[a], "bad-index",
            "voxel index out of range");
    out[a] = 2.0 * static_cast<double>(index[a]) / static_cast<double>(dims[a] - 1) - 1.0;
  }
  return out;
}

NormFrame NormFrame::from_grid(const GridGeometry& g) {
  NormFrame f;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f.direction[r][c] = g.direction[r][c];
  g.center_bounds(f.lo, f.hi);
  return f;
}

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

template <typename T>
void FourierEncoder<T>::encode(const T* xyz, T* out) const {
  for (i64 r = 0; r < rows; ++r) {
    const double phase = kTwoPi * (static_cast<double>(b[r * 3 + 0]) * xyz[0] +
                                   static_cast<double>(b[r * 3 + 1]) * xyz[1] +
                                   static_cast<double>(b[r * 3 + 2]) * xyz[2]);
    out[r] = static_cast<T>(std::cos(phase));
    out[rows + r] = static_cast<T>(std::sin(phase));
  }
}

template <typename T>
void InrModel<T>::validate() const {
  require(arch.n_labels == static_cast<i64>(label_table.size()), "model-inconsistent",
          "n_labels does not match the label table");
  require(weights.seg_out.out == arch.n_labels, "model-inconsistent",
          "segmentation head width does not match the label table");
  require(norm.t1_max > norm.t1_min && norm.t2_max > norm.t2_min, "bad-norm",
          "intensity normalization ranges must be non-degenerate");
  require(dropout_p >= 0.0 && dropout_p < 1.0, "bad-dropout",
          "dropout probability must be in [0,1)");
  require(encoder.rows > 0 && static_cast<i64>(encoder.b.size()) == encoder.rows * 3,
          "model-inconsistent", "Fourier matrix shape mismatch");
}

template <typename T>
InrModel<T> init_model(const ModelArch& arch, const LabelTable& table,
                       const IntensityNorm& norm, const NormFrame& frame,
                       const GridGeometry& t1_geom, const GridGeometry& t2_geom,
                       std::uint64_t seed, double sigma_b, double dropout_p) {
  require(arch.n_labels == static_cast<i64>(table.size()), "model-inconsistent",
          "arch.n_labels must equal the label table size");
  InrModel<T> m;
  m.arch = arch;
  m.label_table = table;
  m.norm = norm;
  m.frame = frame;
  m.t1_geom = t1_geom;
  m.t2_geom = t2_geom;
  m.seed = seed;
  m.dropout_p = dropout_p;

  m.encoder.rows = arch.fourier_rows;
  m.encoder.sigma_b = sigma_b;
  m.encoder.b.resize(static_cast<std::size_t>(arch.fourier_rows) * 3);
  Rng brng(sub_seed(seed, kSeedTagEncoder));
  for (auto& v : m.encoder.b) v = static_cast<T>(sigma_b * brng.gaussian());

  const i64 F = arch.feature_count();
  const i64 W = arch.trunk_width;
  const i64 N = arch.n_labels;
  m.weights.shared[0].resize(F, W);
  for (int l = 1; l < 5; ++l) m.weights.shared[l].resize(W, W);
  m.weights.t1_hidden.resize(W, W);
  m.weights.t1_out.resize(W, 1);
  m.weights.t2_hidden.resize(W, W);
  m.weights.t2_out.resize(W, 1);
  m.weights.seg_hidden.resize(W, W);
  m.weights.seg_out.resize(W, N);

  Rng wrng(sub_seed(seed, kSeedTagWeights));
  m.weights.for_each_layer([&](DenseLayer<T>& l) {
    const double lim = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (auto& w : l.w) w = static_cast<T>(wrng.uniform(-lim, lim));
    // biases stay zero
  });
  m.validate();
  return m;
}

template <typename T>
void BatchBuffers<T>::ensure(i64 batch_rows, const ModelArch& arch) {
  rows = batch_rows;
  const auto n = static_cast<std::size_t>(batch_rows);
  const auto W = static_cast<std::size_t>(arch.trunk_width);
  x0.resize(n * arch.feature_count());
  for (auto& a : act) a.resize(n * W);
  h_t1.resize(n * W);
  h_t2.resize(n * W);
  h_seg.resize(n * W);
  p_t1.resize(n);
  p_t2.resize(n);
  p_seg.resize(n * arch.n_labels);
  g_a.resize(n * std::max<std::size_t>(W, arch.feature_count()));
  g_b.resize(n * std::max<std::size_t>(W, arch.feature_count()));
  g_head.resize(n * std::max<std::size_t>(W, arch.n_labels));
  g_seg_a1.resize(n * W);
}

namespace {

// ReLU then inverted dropout, in place. Counter-based masks keep the result
// independent of the parallel partition.
template <typename T>
void relu_dropout_inplace(T* x, i64 n, std::uint64_t dropout_seed, std::uint64_t step,
                          int layer, double p) {
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  simd::parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) {
      T v = x[i] > T(0) ? x[i] : T(0);
      x[i] = dropout_keep(dropout_seed, step, layer, i, p) ? v * scale : T(0);
    }
  });
}

template <typename T>
void sigmoid_inplace(T* x, i64 n) {
  simd::parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) x[i] = T(1) / (T(1) + std::exp(-x[i]));
  });
}

}  // namespace

template <typename T>
void forward_encoded(const InrModel<T>& m, i64 batch_rows, const HeadRanges& hr,
                     bool training, std::uint64_t step, BatchBuffers<T>& bb) {
  const i64 W = m.arch.trunk_width;
  const std::uint64_t dseed = sub_seed(m.seed, kSeedTagDropout);
  const bool drop = training && m.dropout_p > 0.0;

  const T* cur = bb.x0.data();
  i64 cur_width = m.arch.feature_count();
  for (int l = 0; l < 5; ++l) {
    const auto& layer = m.weights.shared[l];
    simd::gemm_nt(cur, layer.w.data(), bb.act[l].data(), batch_rows, layer.out,
                  cur_width, layer.b.data());
    if (drop)
      relu_dropout_inplace(bb.act[l].data(), batch_rows * W, dseed, step, l, m.dropout_p);
    else
      simd::relu(bb.act[l].data(), bb.act[l].data(), batch_rows * W);
    cur = bb.act[l].data();
    cur_width = W;
  }

  const i64 n1 = hr.n1(), n2 = hr.n2();
  if (n1 > 0) {
    const T* in = bb.act[4].data() + hr.t1_begin * W;
    simd::gemm_nt(in, m.weights.t1_hidden.w.data(), bb.h_t1.data(), n1, W, W,
                  m.weights.t1_hidden.b.data());
    simd::relu(bb.h_t1.data(), bb.h_t1.data(), n1 * W);
    simd::gemm_nt(bb.h_t1.data(), m.weights.t1_out.w.data(), bb.p_t1.data(), n1, 1, W,
                  m.weights.t1_out.b.data());
  }
  if (n2 > 0) {
    const T* in5 = bb.act[4].data() + hr.t2_begin * W;
    simd::gemm_nt(in5, m.weights.t2_hidden.w.data(), bb.h_t2.data(), n2, W, W,
                  m.weights.t2_hidden.b.data());
    simd::relu(bb.h_t2.data(), bb.h_t2.data(), n2 * W);
    simd::gemm_nt(bb.h_t2.data(), m.weights.t2_out.w.data(), bb.p_t2.data(), n2, 1, W,
                  m.weights.t2_out.b.data());

    const T* in1 = bb.act[0].data() + hr.t2_begin * W;
    simd::gemm_nt(in1, m.weights.seg_hidden.w.data(), bb.h_seg.data(), n2, W, W,
                  m.weights.seg_hidden.b.data());
    simd::relu(bb.h_seg.data(), bb.h_seg.data(), n2 * W);
    simd::gemm_nt(bb.h_seg.data(), m.weights.seg_out.w.data(), bb.p_seg.data(), n2,
                  m.arch.n_labels, W, m.weights.seg_out.b.data());
    sigmoid_inplace(bb.p_seg.data(), n2 * m.arch.n_labels);
  }
}

template <typename T>
void forward(const InrModel<T>& m, const T* coords, i64 batch_rows, bool training,
             std::uint64_t step, std::vector<T>& t1_pred, std::vector<T>& t2_pred,
             std::vector<T>& seg_pred) {
  BatchBuffers<T> bb;
  bb.ensure(batch_rows, m.arch);
  simd::parallel_for(batch_rows, [&](i64 r0, i64 r1) {
    for (i64 r = r0; r < r1; ++r)
      m.encoder.encode(coords + r * 3, bb.x0.data() + r * m.arch.feature_count());
  });
  const HeadRanges hr{0, batch_rows, 0, batch_rows};
  forward_encoded(m, batch_rows, hr, training, step, bb);
  t1_pred.assign(bb.p_t1.begin(), bb.p_t1.begin() + batch_rows);
  t2_pred.assign(bb.p_t2.begin(), bb.p_t2.begin() + batch_rows);
  seg_pred.assign(bb.p_seg.begin(), bb.p_seg.begin() + batch_rows * m.arch.n_labels);
}

template <typename T>
LossParts compute_loss(const InrModel<T>& m, const BatchBuffers<T>& bb,
                       const HeadRanges& hr, const T* t1_truth, const T* t2_truth,
                       const std::uint8_t* onehot) {
  LossParts parts;
  parts.n1 = hr.n1();
  parts.n2 = hr.n2();
  for (i64 i = 0; i < parts.n1; ++i) {
    const double e = static_cast<double>(bb.p_t1[i]) - static_cast<double>(t1_truth[i]);
    parts.mse_t1 += e * e;
  }
  for (i64 i = 0; i < parts.n2; ++i) {
    const double e = static_cast<double>(bb.p_t2[i]) - static_cast<double>(t2_truth[i]);
    parts.mse_t2 += e * e;
  }
  const i64 N = m.arch.n_labels;
  for (i64 i = 0; i < parts.n2 * N; ++i) {
    double p = static_cast<double>(bb.p_seg[i]);
    p = std::min(std::max(p, kBceClamp), 1.0 - kBceClamp);
    const double y = onehot[i];
    parts.bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  require(std::isfinite(parts.sum_total()), "loss-nonfinite",
          "non-finite training loss");
  return parts;
}

namespace {

// dL/dz for the clamped sigmoid-BCE term (batch-mean form). Outside the clamp
// interval the loss is constant in z, so the gradient is exactly zero.
template <typename T>
void seg_output_grad(const T* p, const std::uint8_t* y, T* dz, i64 n, double inv_n2) {
  simd::parallel_for(n, [=](i64 i0, i64 i1) {
    for (i64 i = i0; i < i1; ++i) {
      const double pv = static_cast<double>(p[i]);
      dz[i] = (pv > kBceClamp && pv < 1.0 - kBceClamp)
                  ? static_cast<T>((pv - static_cast<double>(y[i])) * inv_n2)
                  : T(0);
    }
  });
}

}  // namespace

template <typename T>
void Gradients<T>::ensure(const ModelArch& arch) {
  const i64 F = arch.feature_count();
  const i64 W = arch.trunk_width;
  if (g.shared[0].in != F || g.shared[0].out != W || g.seg_out.out != arch.n_labels) {
    g.shared[0].resize(F, W);
    for (int l = 1; l < 5; ++l) g.shared[l].resize(W, W);
    g.t1_hidden.resize(W, W);
    g.t1_out.resize(W, 1);
    g.t2_hidden.resize(W, W);
    g.t2_out.resize(W, 1);
    g.seg_hidden.resize(W, W);
    g.seg_out.resize(W, arch.n_labels);
  }
}

template <typename T>
void backward_batch(const InrModel<T>& m, BatchBuffers<T>& bb, const HeadRanges& hr,
                    bool training, const T* t1_truth, const T* t2_truth,
                    const std::uint8_t* onehot, Gradients<T>& grads) {
  require(hr.t1_begin == 0 && hr.t2_begin == hr.t1_end, "bad-ranges",
          "backward expects contiguous disjoint t1/t2 row blocks");
  grads.ensure(m.arch);
  const i64 M = bb.rows;
  const i64 W = m.arch.trunk_width;
  const i64 N = m.arch.n_labels;
  const i64 n1 = hr.n1(), n2 = hr.n2();
  const T relu_scale =
      training && m.dropout_p > 0.0 ? static_cast<T>(1.0 / (1.0 - m.dropout_p)) : T(1);

  // Segmentation head (rows [t2_begin, t2_end) of the first shared layer).
  std::fill(bb.g_seg_a1.begin(), bb.g_seg_a1.end(), T(0));
  if (n2 > 0) {
    T* dz = bb.g_head.data();  // [n2 x N]
    seg_output_grad(bb.p_seg.data(), onehot, dz, n2 * N, 1.0 / static_cast<double>(n2));
    simd::gemm_tn(dz, bb.h_seg.data(), grads.g.seg_out.w.data(), N, W, n2, false);
    simd::colsum(dz, grads.g.seg_out.b.data(), n2, N);
    T* dh = bb.g_a.data();  // [n2 x W]
    simd::gemm_nn(dz, m.weights.seg_out.w.data(), dh, n2, W, N);
    simd::relu_backward(dh, bb.h_seg.data(), dh, n2 * W, T(1));
    const T* a1_in = bb.act[0].data() + hr.t2_begin * W;
    simd::gemm_tn(dh, a1_in, grads.g.seg_hidden.w.data(), W, W, n2, false);
    simd::colsum(dh, grads.g.seg_hidden.b.data(), n2, W);
    simd::gemm_nn(dh, m.weights.seg_hidden.w.data(),
                  bb.g_seg_a1.data() + hr.t2_begin * W, n2, W, W);
  } else {
    auto zero = [](DenseLayer<T>& l) {
      std::fill(l.w.begin(), l.w.end(), T(0));
      std::fill(l.b.begin(), l.b.end(), T(0));
    };
    zero(grads.g.seg_hidden);
    zero(grads.g.seg_out);
  }

  // Intensity heads write the last-trunk gradient into g_b ([M x W]).
  T* dA5 = bb.g_b.data();
  std::fill(bb.g_b.begin(), bb.g_b.begin() + M * W, T(0));
  auto intensity_head_backward = [&](const DenseLayer<T>& hidden, const DenseLayer<T>& out,
                                     DenseLayer<T>& ghidden, DenseLayer<T>& gout,
                                     const T* pred, const T* truth, i64 rows,
                                     i64 row_begin, const std::vector<T>& hbuf) {
    if (rows == 0) {
      std::fill(ghidden.w.begin(), ghidden.w.end(), T(0));
      std::fill(ghidden.b.begin(), ghidden.b.end(), T(0));
      std::fill(gout.w.begin(), gout.w.end(), T(0));
      std::fill(gout.b.begin(), gout.b.end(), T(0));
      return;
    }
    T* dp = bb.g_head.data();  // [rows x 1]
    const double inv = 2.0 / static_cast<double>(rows);
    for (i64 i = 0; i < rows; ++i)
      dp[i] = static_cast<T>((static_cast<double>(pred[i]) - static_cast<double>(truth[i])) * inv);
    simd::gemm_tn(dp, hbuf.data(), gout.w.data(), 1, W, rows, false);
    simd::colsum(dp, gout.b.data(), rows, 1);
    T* dh = bb.g_a.data();  // [rows x W]
    simd::gemm_nn(dp, out.w.data(), dh, rows, W, 1);
    simd::relu_backward(dh, hbuf.data(), dh, rows * W, T(1));
    const T* a5_in = bb.act[4].data() + row_begin * W;
    simd::gemm_tn(dh, a5_in, ghidden.w.data(), W, W, rows, false);
    simd::colsum(dh, ghidden.b.data(), rows, W);
    simd::gemm_nn(dh, hidden.w.data(), dA5 + row_begin * W, rows, W, W);
  };
  intensity_head_backward(m.weights.t1_hidden, m.weights.t1_out, grads.g.t1_hidden,
                          grads.g.t1_out, bb.p_t1.data(), t1_truth, n1, hr.t1_begin,
                          bb.h_t1);
  intensity_head_backward(m.weights.t2_hidden, m.weights.t2_out, grads.g.t2_hidden,
                          grads.g.t2_out, bb.p_t2.data(), t2_truth, n2, hr.t2_begin,
                          bb.h_t2);

  // Trunk, top down. g_b holds dA_l entering the loop; g_a receives dA_{l-1}.
  for (int l = 4; l >= 0; --l) {
    T* dA = bb.g_b.data();
    simd::relu_backward(dA, bb.act[l].data(), dA, M * W, relu_scale);  // now dZ_l
    const T* below = l > 0 ? bb.act[l - 1].data() : bb.x0.data();
    const i64 below_width = l > 0 ? W : m.arch.feature_count();
    simd::gemm_tn(dA, below, grads.g.shared[l].w.data(), W, below_width, M, false);
    simd::colsum(dA, grads.g.shared[l].b.data(), M, W);
    if (l > 0) {
      simd::gemm_nn(dA, m.weights.shared[l].w.data(), bb.g_a.data(), M, W, W);
      if (l == 1)
        simd::add_inplace(bb.g_a.data(), bb.g_seg_a1.data(), M * W);
      std::swap(bb.g_a, bb.g_b);
    }
  }
}

template <typename T>
void AdamState<T>::ensure(const ModelArch& arch) {
  Gradients<T> tmp;
  if (m.shared[0].in != arch.feature_count() || m.seg_out.out != arch.n_labels) {
    tmp.ensure(arch);
    m = tmp.g;
    v = tmp.g;
    t = 0;
  }
}

template <typename T>
void adam_step(InrModel<T>& model, const Gradients<T>& grads, AdamState<T>& state,
               double lr, double beta1, double beta2, double eps) {
  state.ensure(model.arch);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  auto* gm = &state.m;
  auto* gv = &state.v;
  // iterate layers in lockstep
  std::vector<DenseLayer<T>*> wl, ml, vl;
  std::vector<const DenseLayer<T>*> gl;
  model.weights.for_each_layer([&](DenseLayer<T>& l) { wl.push_back(&l); });
  gm->for_each_layer([&](DenseLayer<T>& l) { ml.push_back(&l); });
  gv->for_each_layer([&](DenseLayer<T>& l) { vl.push_back(&l); });
  grads.g.for_each_layer([&](const DenseLayer<T>& l) { gl.push_back(&l); });
  for (std::size_t i = 0; i < wl.size(); ++i) {
    simd::adam_step(wl[i]->w.data(), ml[i]->w.data(), vl[i]->w.data(), gl[i]->w.data(),
                    static_cast<i64>(wl[i]->w.size()), static_cast<T>(lr),
                    static_cast<T>(beta1), static_cast<T>(beta2), static_cast<T>(eps),
                    static_cast<T>(1.0 / bc1), static_cast<T>(1.0 / bc2));
    simd::adam_step(wl[i]->b.data(), ml[i]->b.data(), vl[i]->b.data(), gl[i]->b.data(),
                    static_cast<i64>(wl[i]->b.size()), static_cast<T>(lr),
                    static_cast<T>(beta1), static_cast<T>(beta2), static_cast<T>(eps),
                    static_cast<T>(1.0 / bc1), static_cast<T>(1.0 / bc2));
  }
}

// ---- serialization ----

namespace {

nlohmann::json geom_to_json(const GridGeometry& g) {
  nlohmann::json j;
  j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
  j["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
  j["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
  auto rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back({g.direction[r][0], g.direction[r][1], g.direction[r][2]});
  j["direction"] = rows;
  return j;
}

GridGeometry geom_from_json(const nlohmann::json& j) {
  GridGeometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = j.at("dims")[a].get<i64>();
    g.spacing[a] = j.at("spacing")[a].get<double>();
    g.origin[a] = j.at("origin")[a].get<double>();
    for (int c = 0; c < 3; ++c) g.direction[a][c] = j.at("direction")[a][c].get<double>();
  }
  return g;
}

void write_tensor(std::ofstream& out, const std::vector<float>& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

void read_tensor(std::ifstream& in, std::vector<float>& t, const std::string& what) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(t.size() * sizeof(float)),
          "truncated", "model file ends inside tensor '" + what + "'");
}

constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void save_model(const InrModel<float>& m, const std::string& path) {
  m.validate();
  nlohmann::json meta;
  meta["fourier_rows"] = m.arch.fourier_rows;
  meta["trunk_width"] = m.arch.trunk_width;
  meta["n_labels"] = m.arch.n_labels;
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [id, name] : m.label_table.entries) labels[std::to_string(id)] = name;
  meta["labels"] = labels;
  meta["intensity_norm"] = {{"t1", {m.norm.t1_min, m.norm.t1_max}},
                            {"t2", {m.norm.t2_min, m.norm.t2_max}}};
  meta["sigma_b"] = m.encoder.sigma_b;
  meta["dropout_p"] = m.dropout_p;
  meta["seed"] = m.seed;
  auto dir = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    dir.push_back({m.frame.direction[r][0], m.frame.direction[r][1], m.frame.direction[r][2]});
  meta["frame"] = {{"direction", dir},
                   {"lo", {m.frame.lo[0], m.frame.lo[1], m.frame.lo[2]}},
                   {"hi", {m.frame.hi[0], m.frame.hi[1], m.frame.hi[2]}}};
  meta["t1_dims"] = {m.t1_geom.dims[0], m.t1_geom.dims[1], m.t1_geom.dims[2]};
  meta["t2_dims"] = {m.t2_geom.dims[0], m.t2_geom.dims[1], m.t2_geom.dims[2]};
  meta["t1_geom"] = geom_to_json(m.t1_geom);
  meta["t2_geom"] = geom_to_json(m.t2_geom);
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-open", "cannot write model '" + path + "'");
  out.write("INRM", 4);
  const std::uint32_t version = kModelVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t meta_len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&meta_len), 8);
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_tensor(out, m.encoder.b);
  m.weights.for_each_layer([&](const DenseLayer<float>& l) {
    write_tensor(out, l.w);
    write_tensor(out, l.b);
  });
  require(out.good(), "io-write", "short write to '" + path + "'");
}

InrModel<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-open", "cannot open model '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "INRM", 4) == 0, "bad-magic",
          "not an INRM model file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  require(version == kModelVersion, "bad-version",
          "unsupported model version " + std::to_string(version));
  std::uint64_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), 8);
  require(in.good() && meta_len > 0 && meta_len < (1ULL << 30), "bad-header",
          "corrupt metadata length");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  require(in.gcount() == static_cast<std::streamsize>(meta_len), "truncated",
          "model file ends inside metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    fail("bad-json", std::string("model metadata: ") + e.what());
  }

  InrModel<float> m;
  m.arch.fourier_rows = meta.at("fourier_rows").get<i64>();
  m.arch.trunk_width = meta.at("trunk_width").get<i64>();
  m.arch.n_labels = meta.at("n_labels").get<i64>();
  for (const auto& [key, value] : meta.at("labels").items())
    m.label_table.entries.emplace_back(static_cast<std::int32_t>(std::stol(key)),
                                       value.get<std::string>());
  std::sort(m.label_table.entries.begin(), m.label_table.entries.end());
  m.norm.t1_min = meta.at("intensity_norm").at("t1")[0].get<double>();
  m.norm.t1_max = meta.at("intensity_norm").at("t1")[1].get<double>();
  m.norm.t2_min = meta.at("intensity_norm").at("t2")[0].get<double>();
  m.norm.t2_max = meta.at("intensity_norm").at("t2")[1].get<double>();
  m.encoder.sigma_b = meta.at("sigma_b").get<double>();
  m.dropout_p = meta.at("dropout_p").get<double>();
  m.seed = meta.at("seed").get<std::uint64_t>();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      m.frame.direction[r][c] = meta.at("frame").at("direction")[r][c].get<double>();
    m.frame.lo[r] = meta.at("frame").at("lo")[r].get<double>();
    m.frame.hi[r] = meta.at("frame").at("hi")[r].get<double>();
  }
  m.t1_geom = geom_from_json(meta.at("t1_geom"));
  m.t2_geom = geom_from_json(meta.at("t2_geom"));
  require(m.arch.n_labels == static_cast<i64>(m.label_table.size()),
          "model-inconsistent",
          "metadata n_labels does not match the label table (segmentation head width)");

  const i64 F = m.arch.feature_count();
  const i64 W = m.arch.trunk_width;
  m.encoder.rows = m.arch.fourier_rows;
  m.encoder.b.resize(static_cast<std::size_t>(m.arch.fourier_rows) * 3);
  m.weights.shared[0].resize(F, W);
  for (int l = 1; l < 5; ++l) m.weights.shared[l].resize(W, W);
  m.weights.t1_hidden.resize(W, W);
  m.weights.t1_out.resize(W, 1);
  m.weights.t2_hidden.resize(W, W);
  m.weights.t2_out.resize(W, 1);
  m.weights.seg_hidden.resize(W, W);
  m.weights.seg_out.resize(W, m.arch.n_labels);

  read_tensor(in, m.encoder.b, "fourier");
  m.weights.for_each_layer([&](DenseLayer<float>& l) {
    read_tensor(in, l.w, "weights");
    read_tensor(in, l.b, "bias");
  });
  char extra;
  in.read(&extra, 1);
  require(in.eof(), "trailing-data", "model file has trailing bytes");
  m.validate();
  return m;
}

// explicit instantiations
template struct FourierEncoder<float>;
template struct FourierEncoder<double>;
template struct InrModel<float>;
template struct InrModel<double>;
template struct BatchBuffers<float>;
template struct BatchBuffers<double>;
template struct Gradients<float>;
template struct Gradients<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template InrModel<float> init_model<float>(const ModelArch&, const LabelTable&,
                                           const IntensityNorm&, const NormFrame&,
                                           const GridGeometry&, const GridGeometry&,
                                           std::uint64_t, double, double);
template InrModel<double> init_model<double>(const ModelArch&, const LabelTable&,
                                             const IntensityNorm&, const NormFrame&,
                                             const GridGeometry&, const GridGeometry&,
                                             std::uint64_t, double, double);
template void forward_encoded<float>(const InrModel<float>&, i64, const HeadRanges&,
                                     bool, std::uint64_t, BatchBuffers<float>&);
template void forward_encoded<double>(const InrModel<double>&, i64, const HeadRanges&,
                                      bool, std::uint64_t, BatchBuffers<double>&);
template void forward<float>(const InrModel<float>&, const float*, i64, bool,
                             std::uint64_t, std::vector<float>&, std::vector<float>&,
                             std::vector<float>&);
template void forward<double>(const InrModel<double>&, const double*, i64, bool,
                              std::uint64_t, std::vector<double>&, std::vector<double>&,
                              std::vector<double>&);
template LossParts compute_loss<float>(const InrModel<float>&, const BatchBuffers<float>&,
                                       const HeadRanges&, const float*, const float*,
                                       const std::uint8_t*);
template LossParts compute_loss<double>(const InrModel<double>&,
                                        const BatchBuffers<double>&, const HeadRanges&,
                                        const double*, const double*,
                                        const std::uint8_t*);
template void backward_batch<float>(const InrModel<float>&, BatchBuffers<float>&,
                                    const HeadRanges&, bool, const float*, const float*,
                                    const std::uint8_t*, Gradients<float>&);
template void backward_batch<double>(const InrModel<double>&, BatchBuffers<double>&,
                                     const HeadRanges&, bool, const double*,
                                     const double*, const std::uint8_t*,
                                     Gradients<double>&);
template void adam_step<float>(InrModel<float>&, const Gradients<float>&,
                               AdamState<float>&, double, double, double, double);
template void adam_step<double>(InrModel<double>&, const Gradients<double>&,
                                AdamState<double>&, double, double, double, double);

}  // namespace isovox
