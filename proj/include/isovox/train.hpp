#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "isovox/model.hpp"
#include "isovox/volume.hpp"

namespace isovox {

/// Flattened supervision sets. Omega-1 rows carry (coordinate, T1 intensity),
/// omega-2 rows carry (coordinate, T2 intensity, one-hot labels); both use the
/// shared normalization frame of the T2 patch, and intensities are min-max
/// normalized to [0,1] per modality.
struct TrainingDomain {
  i64 n1 = 0, n2 = 0;
  std::vector<float> coords1, values1;  // [n1 x 3], [n1]
  std::vector<float> coords2, values2;  // [n2 x 3], [n2]
  std::vector<std::uint8_t> onehot2;    // [n2 x N], label-table order
  NormFrame frame;
  IntensityNorm norm;
  LabelTable table;
  GridGeometry t1_geom, t2_geom;
};

struct TrainConfig {
  int epochs = 60;
  i64 batch_size = 10000;
  double lr = 1e-4;
  double dropout_p = 0.1;
  double sigma_b = 10.0;
  std::uint64_t seed = 0;
  i64 fourier_rows = 256;
  i64 trunk_width = 1024;
  int loss_log_every = 1;
  // test instrumentation; called once per minibatch when set
  std::function<void(i64 epoch, i64 batch, i64 n1b, i64 n2b)> batch_hook;
};

struct EpochLoss {
  i64 epoch = 0;
  double mse_t1 = 0, mse_t2 = 0, bce = 0;  // summed over the epoch's samples
  double total() const { return mse_t1 + mse_t2 + bce; }
};

struct FitResult {
  InrModel<float> model;
  std::vector<EpochLoss> trace;
};

/// t1 must already be harmonized to t2's bounding box; seg lives on the t2 grid.
TrainingDomain build_domain(const Volume& t1, const Volume& t2, const LabelVolume& seg);

/// Full training loop: each epoch is one shuffled pass over omega1 and omega2
/// in mixed minibatches. Deterministic for a fixed (domain, config) pair.
FitResult fit(const TrainingDomain& domain, const TrainConfig& cfg,
              std::ostream* log = nullptr);

void write_loss_trace_csv(const std::vector<EpochLoss>& trace, const std::string& path);

}  // namespace isovox
