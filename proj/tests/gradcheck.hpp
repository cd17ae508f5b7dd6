#pragma once

// Finite-difference gradient oracle. The forward pass here is written as
// plain nested loops in double precision, independent of the kernel library,
// so it can arbitrate the analytic backward pass.

#include <cmath>
#include <thread>
#include <vector>

#include "isovox/model.hpp"
#include "isovox/rng.hpp"

namespace isovox::gradcheck {

struct Batch {
  i64 n1 = 0, n2 = 0;
  std::vector<double> x0;  // encoded features [rows x F]
  std::vector<double> t1_truth, t2_truth;
  std::vector<std::uint8_t> onehot;
  std::uint64_t step = 0;
};

inline void oracle_affine(const DenseLayer<double>& l, const double* x, double* y,
                          i64 rows) {
  for (i64 r = 0; r < rows; ++r)
    for (i64 o = 0; o < l.out; ++o) {
      double acc = l.b[o];
      for (i64 k = 0; k < l.in; ++k) acc += x[r * l.in + k] * l.w[o * l.in + k];
      y[r * l.out + o] = acc;
    }
}

struct OracleEval {
  double loss = 0;
  // Rolling hash of every ReLU sign and BCE clamp state. Central differences
  // are only meaningful while both endpoints sit on the same smooth piece of
  // the loss; the pattern detects pieces changing under a perturbation.
  std::uint64_t pattern = 0xcbf29ce484222325ULL;
  void fold(std::uint64_t bit) { pattern = (pattern ^ bit) * 1099511628211ULL; }
};

// Batch-mean loss recomputed from scratch; mirrors the published architecture
// (five shared layers with ReLU + inverted dropout, heads per contract).
inline OracleEval oracle_eval(const InrModel<double>& m, const Batch& b) {
  OracleEval ev;
  const i64 rows = b.n1 + b.n2;
  const i64 W = m.arch.trunk_width;
  const std::uint64_t dseed = sub_seed(m.seed, kSeedTagDropout);
  std::vector<double> cur(b.x0), next;
  std::vector<double> a1;  // first shared layer output (segmentation input)
  for (int l = 0; l < 5; ++l) {
    next.resize(rows * W);
    oracle_affine(m.weights.shared[l], cur.data(), next.data(), rows);
    for (i64 i = 0; i < rows * W; ++i) {
      ev.fold(next[i] > 0.0);
      double v = next[i] > 0.0 ? next[i] : 0.0;
      if (m.dropout_p > 0.0)
        v = dropout_keep(dseed, b.step, l, i, m.dropout_p) ? v / (1.0 - m.dropout_p) : 0.0;
      next[i] = v;
    }
    if (l == 0) a1 = next;
    cur = next;
  }

  double loss = 0.0;
  auto head = [&](const DenseLayer<double>& hidden, const DenseLayer<double>& out,
                  const double* in, i64 nrows, std::vector<double>& pred) {
    std::vector<double> h(nrows * hidden.out);
    oracle_affine(hidden, in, h.data(), nrows);
    for (auto& v : h) {
      ev.fold(v > 0.0);
      v = v > 0.0 ? v : 0.0;
    }
    pred.resize(nrows * out.out);
    oracle_affine(out, h.data(), pred.data(), nrows);
  };

  if (b.n1 > 0) {
    std::vector<double> p1;
    head(m.weights.t1_hidden, m.weights.t1_out, cur.data(), b.n1, p1);
    double s = 0;
    for (i64 i = 0; i < b.n1; ++i) s += (p1[i] - b.t1_truth[i]) * (p1[i] - b.t1_truth[i]);
    loss += s / static_cast<double>(b.n1);
  }
  if (b.n2 > 0) {
    std::vector<double> p2, ps;
    head(m.weights.t2_hidden, m.weights.t2_out, cur.data() + b.n1 * W, b.n2, p2);
    head(m.weights.seg_hidden, m.weights.seg_out, a1.data() + b.n1 * W, b.n2, ps);
    double s = 0;
    for (i64 i = 0; i < b.n2; ++i) s += (p2[i] - b.t2_truth[i]) * (p2[i] - b.t2_truth[i]);
    double bce = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      double p = 1.0 / (1.0 + std::exp(-ps[i]));
      ev.fold(p <= kBceClamp ? 1 : (p >= 1.0 - kBceClamp ? 2 : 3));
      p = std::min(std::max(p, kBceClamp), 1.0 - kBceClamp);
      const double y = b.onehot[i];
      bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    loss += (s + bce) / static_cast<double>(b.n2);
  }
  ev.loss = loss;
  return ev;
}

inline double oracle_loss(const InrModel<double>& m, const Batch& b) {
  return oracle_eval(m, b).loss;
}

inline Batch random_batch(const InrModel<double>& m, i64 n1, i64 n2, Rng& rng,
                          std::uint64_t step) {
  Batch b;
  b.n1 = n1;
  b.n2 = n2;
  b.step = step;
  const i64 rows = n1 + n2;
  const i64 F = m.arch.feature_count();
  b.x0.resize(rows * F);
  for (i64 r = 0; r < rows; ++r) {
    double xyz[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    m.encoder.encode(xyz, b.x0.data() + r * F);
  }
  b.t1_truth.resize(n1);
  for (auto& v : b.t1_truth) v = rng.uniform01();
  b.t2_truth.resize(n2);
  for (auto& v : b.t2_truth) v = rng.uniform01();
  b.onehot.assign(n2 * m.arch.n_labels, 0);
  for (i64 r = 0; r < n2; ++r)
    b.onehot[r * m.arch.n_labels + rng.bounded(m.arch.n_labels)] = 1;
  return b;
}

struct Report {
  double max_rel_err = 0;
  i64 params_checked = 0;
  i64 step_shrunk = 0;  // parameters that needed a smaller step to stay smooth
};

/// Central differences on every trainable parameter vs the analytic gradient.
/// The loss is piecewise smooth (ReLU, BCE clamp); when a +-delta perturbation
/// changes the activation pattern, the step is halved until both endpoints sit
/// on the base pattern, which is where the analytic derivative lives.
inline Report run(const InrModel<double>& model, const Batch& batch, double delta) {
  BatchBuffers<double> bb;
  bb.ensure(batch.n1 + batch.n2, model.arch);
  std::copy(batch.x0.begin(), batch.x0.end(), bb.x0.begin());
  const HeadRanges hr{0, batch.n1, batch.n1, batch.n1 + batch.n2};
  forward_encoded(model, batch.n1 + batch.n2, hr, true, batch.step, bb);
  Gradients<double> grads;
  backward_batch(model, bb, hr, true, batch.t1_truth.data(), batch.t2_truth.data(),
                 batch.onehot.data(), grads);

  std::vector<const std::vector<double>*> gtensors;
  grads.g.for_each_layer([&](const DenseLayer<double>& l) {
    gtensors.push_back(&l.w);
    gtensors.push_back(&l.b);
  });

  const std::uint64_t base_pattern = oracle_eval(model, batch).pattern;

  // Each worker perturbs its own copy of the model.
  const int workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<Report> reports(workers);
  std::vector<std::thread> pool;
  for (int wkr = 0; wkr < workers; ++wkr)
    pool.emplace_back([&, wkr]() {
      InrModel<double> local = model;
      std::vector<std::vector<double>*> wtensors;
      local.weights.for_each_layer([&](DenseLayer<double>& l) {
        wtensors.push_back(&l.w);
        wtensors.push_back(&l.b);
      });
      Report rep;
      for (std::size_t t = 0; t < wtensors.size(); ++t) {
        auto& w = *wtensors[t];
        const auto& g = *gtensors[t];
        for (std::size_t p = wkr; p < w.size(); p += workers) {
          const double saved = w[p];
          double d = delta;
          OracleEval lp, lm;
          for (int attempt = 0; attempt < 14; ++attempt) {
            w[p] = saved + d;
            lp = oracle_eval(local, batch);
            w[p] = saved - d;
            lm = oracle_eval(local, batch);
            if (lp.pattern == base_pattern && lm.pattern == base_pattern) break;
            d *= 0.5;
          }
          w[p] = saved;
          if (d != delta) rep.step_shrunk += 1;
          const double fd = (lp.loss - lm.loss) / (2.0 * d);
          const double rel =
              std::abs(g[p] - fd) / std::max({std::abs(g[p]), std::abs(fd), 1e-6});
          rep.max_rel_err = std::max(rep.max_rel_err, rel);
          rep.params_checked += 1;
        }
      }
      reports[wkr] = rep;
    });
  for (auto& th : pool) th.join();
  Report total;
  for (const auto& r : reports) {
    total.max_rel_err = std::max(total.max_rel_err, r.max_rel_err);
    total.params_checked += r.params_checked;
    total.step_shrunk += r.step_shrunk;
  }
  return total;
}

inline InrModel<double> reduced_model(i64 fourier_rows, i64 width, i64 n_labels,
                                      std::uint64_t seed, double dropout_p) {
  ModelArch arch;
  arch.fourier_rows = fourier_rows;
  arch.trunk_width = width;
  arch.n_labels = n_labels;
  LabelTable table;
  for (i64 i = 0; i < n_labels; ++i)
    table.entries.emplace_back(static_cast<std::int32_t>(i), "l" + std::to_string(i));
  GridGeometry g;
  g.dims = {4, 4, 4};
  return init_model<double>(arch, table, IntensityNorm{}, NormFrame::from_grid(g), g, g,
                            seed, 10.0, dropout_p);
}

}  // namespace isovox::gradcheck
