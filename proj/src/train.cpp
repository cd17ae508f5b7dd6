#include "isovox/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "isovox/simd/kernels.hpp"

namespace isovox {

namespace {

void push_sample(const GridGeometry& g, const NormFrame& frame, i64 i, i64 j, i64 k,
                 std::vector<float>& coords) {
  const Vec3 p = g.voxel_to_physical(
      {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
  Vec3 c = frame.to_normalized(p);
  for (int a = 0; a < 3; ++a)
    coords.push_back(static_cast<float>(std::clamp(c[a], -1.0, 1.0)));
}

void min_max(const std::vector<float>& v, double& lo, double& hi) {
  lo = v[0];
  hi = v[0];
  for (const float x : v) {
    lo = std::min(lo, static_cast<double>(x));
    hi = std::max(hi, static_cast<double>(x));
  }
  if (!(hi > lo)) hi = lo + 1.0;  // constant patch; keep the mapping invertible
}

}  // namespace

TrainingDomain build_domain(const Volume& t1, const Volume& t2, const LabelVolume& seg) {
  t1.validate();
  t2.validate();
  seg.validate();
  require(t1.geom.voxel_count() > 0 && t2.geom.voxel_count() > 0, "empty-patch",
          "patches must be non-empty");
  require(seg.geom.approx_equal(t2.geom), "grid-mismatch",
          "segmentation must live on the T2 patch grid");
  const GridGeometry expected = harmonize_target_grid(t2.geom, t1.geom.spacing);
  require(t1.geom.approx_equal(expected, 1e-4), "not-harmonized",
          "T1 patch is not harmonized to the T2 bounding box");

  TrainingDomain d;
  d.frame = NormFrame::from_grid(t2.geom);
  d.table = seg.table;
  d.t1_geom = t1.geom;
  d.t2_geom = t2.geom;
  min_max(t1.data, d.norm.t1_min, d.norm.t1_max);
  min_max(t2.data, d.norm.t2_min, d.norm.t2_max);

  d.n1 = t1.geom.voxel_count();
  d.coords1.reserve(d.n1 * 3);
  d.values1.reserve(d.n1);
  const double s1 = 1.0 / (d.norm.t1_max - d.norm.t1_min);
  i64 idx = 0;
  for (i64 k = 0; k < t1.geom.dims[2]; ++k)
    for (i64 j = 0; j < t1.geom.dims[1]; ++j)
      for (i64 i = 0; i < t1.geom.dims[0]; ++i, ++idx) {
        push_sample(t1.geom, d.frame, i, j, k, d.coords1);
        d.values1.push_back(static_cast<float>((t1.data[idx] - d.norm.t1_min) * s1));
      }

  d.n2 = t2.geom.voxel_count();
  const i64 N = static_cast<i64>(d.table.size());
  d.coords2.reserve(d.n2 * 3);
  d.values2.reserve(d.n2);
  d.onehot2.assign(d.n2 * N, 0);
  const double s2 = 1.0 / (d.norm.t2_max - d.norm.t2_min);
  idx = 0;
  for (i64 k = 0; k < t2.geom.dims[2]; ++k)
    for (i64 j = 0; j < t2.geom.dims[1]; ++j)
      for (i64 i = 0; i < t2.geom.dims[0]; ++i, ++idx) {
        push_sample(t2.geom, d.frame, i, j, k, d.coords2);
        d.values2.push_back(static_cast<float>((t2.data[idx] - d.norm.t2_min) * s2));
        d.onehot2[idx * N + d.table.index_of(seg.data[idx])] = 1;
      }
  return d;
}

FitResult fit(const TrainingDomain& domain, const TrainConfig& cfg, std::ostream* log) {
  require(cfg.epochs >= 1, "bad-config", "epochs must be >= 1");
  require(cfg.batch_size >= 1, "bad-config", "batch_size must be >= 1");
  require(domain.n1 > 0 && domain.n2 > 0, "empty-patch", "training domain is empty");

  ModelArch arch;
  arch.fourier_rows = cfg.fourier_rows;
  arch.trunk_width = cfg.trunk_width;
  arch.n_labels = static_cast<i64>(domain.table.size());
  FitResult res{init_model<float>(arch, domain.table, domain.norm, domain.frame,
                                  domain.t1_geom, domain.t2_geom, cfg.seed, cfg.sigma_b,
                                  cfg.dropout_p),
                {}};
  InrModel<float>& model = res.model;

  const i64 F = arch.feature_count();
  const i64 n_total = domain.n1 + domain.n2;
  // Coordinates are fixed for the whole fit, so their encodings are computed once.
  std::vector<float> enc(static_cast<std::size_t>(n_total) * F);
  simd::parallel_for(n_total, [&](i64 r0, i64 r1) {
    for (i64 r = r0; r < r1; ++r) {
      const float* xyz = r < domain.n1 ? domain.coords1.data() + r * 3
                                       : domain.coords2.data() + (r - domain.n1) * 3;
      model.encoder.encode(xyz, enc.data() + r * F);
    }
  });

  std::vector<i64> perm(n_total);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng(sub_seed(cfg.seed, kSeedTagShuffle));

  BatchBuffers<float> bb;
  Gradients<float> grads;
  AdamState<float> adam;
  std::vector<float> t1_truth, t2_truth;
  std::vector<std::uint8_t> onehot;
  std::vector<i64> o1rows, o2rows;
  const i64 N = arch.n_labels;
  const i64 batches = (n_total + cfg.batch_size - 1) / cfg.batch_size;
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(perm);
    EpochLoss el;
    el.epoch = epoch;
    for (i64 b = 0; b < batches; ++b) {
      const i64 lo = b * cfg.batch_size;
      const i64 hi = std::min<i64>(n_total, lo + cfg.batch_size);
      o1rows.clear();
      o2rows.clear();
      for (i64 s = lo; s < hi; ++s)
        (perm[s] < domain.n1 ? o1rows : o2rows).push_back(perm[s]);
      const i64 n1b = static_cast<i64>(o1rows.size());
      const i64 n2b = static_cast<i64>(o2rows.size());
      const i64 rows = n1b + n2b;
      if (cfg.batch_hook) cfg.batch_hook(epoch, b, n1b, n2b);

      bb.ensure(rows, arch);
      t1_truth.resize(n1b);
      t2_truth.resize(n2b);
      onehot.resize(n2b * N);
      for (i64 r = 0; r < n1b; ++r) {
        const i64 src = o1rows[r];
        std::memcpy(bb.x0.data() + r * F, enc.data() + src * F, sizeof(float) * F);
        t1_truth[r] = domain.values1[src];
      }
      for (i64 r = 0; r < n2b; ++r) {
        const i64 src = o2rows[r] - domain.n1;
        std::memcpy(bb.x0.data() + (n1b + r) * F, enc.data() + o2rows[r] * F,
                    sizeof(float) * F);
        t2_truth[r] = domain.values2[src];
        std::memcpy(onehot.data() + r * N, domain.onehot2.data() + src * N, N);
      }

      const HeadRanges hr{0, n1b, n1b, rows};
      forward_encoded(model, rows, hr, true, step, bb);
      LossParts parts;
      try {
        parts = compute_loss(model, bb, hr, t1_truth.data(), t2_truth.data(),
                             onehot.data());
      } catch (const Error& e) {
        fail(e.code(), "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                           ": " + e.what());
      }
      el.mse_t1 += parts.mse_t1;
      el.mse_t2 += parts.mse_t2;
      el.bce += parts.bce;

      backward_batch(model, bb, hr, true, t1_truth.data(), t2_truth.data(),
                     onehot.data(), grads);
      adam_step(model, grads, adam, cfg.lr);
      ++step;
    }
    res.trace.push_back(el);
    if (log && cfg.loss_log_every > 0 && (epoch % cfg.loss_log_every == 0 ||
                                          epoch == cfg.epochs - 1))
      (*log) << "epoch " << epoch << " mse_t1 " << el.mse_t1 << " mse_t2 " << el.mse_t2
             << " bce " << el.bce << " total " << el.total() << "\n";
  }
  return res;
}

void write_loss_trace_csv(const std::vector<EpochLoss>& trace, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write loss trace '" + path + "'");
  out << "epoch,mse_t1,mse_t2,bce,total\n";
  out.precision(17);
  for (const auto& e : trace)
    out << e.epoch << ',' << e.mse_t1 << ',' << e.mse_t2 << ',' << e.bce << ','
        << e.total() << "\n";
}

}  // namespace isovox
