#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <thread>

#include "isovox/model.hpp"
#include "isovox/phantom.hpp"
#include "isovox/simd/kernels.hpp"
#include "isovox/train.hpp"
#include "isovox/volume.hpp"

using namespace isovox;

namespace {

PhantomSpec small_spec(PhantomPreset preset, std::uint64_t seed) {
  PhantomSpec s = PhantomSpec::defaults(preset);
  s.t2_dims = {14, 14, 4};
  s.shell_outer_radius = 2.2;
  s.shell_wall = 0.8;
  s.slab_thickness = 3.0;
  s.ball_radius = 2.0;
  s.seed = seed;
  return s;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 1500;
  tc.fourier_rows = 16;
  tc.trunk_width = 48;
  tc.seed = seed;
  return tc;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("build_domain: shared frame, corner mapping, sample counts") {
  const PhantomSpec spec = small_spec(PhantomPreset::shell, 3);
  const PhantomOutput ph = generate(spec);
  const TrainingDomain d = build_domain(ph.t1, ph.t2, ph.seg_aniso);

  CHECK(d.n1 == ph.t1.geom.voxel_count());
  CHECK(d.n2 == ph.t2.geom.voxel_count());
  // T2 corner voxel maps to the normalized cube corner
  CHECK(d.coords2[0] == -1.0f);
  CHECK(d.coords2[1] == -1.0f);
  CHECK(d.coords2[2] == -1.0f);
  const i64 last = (d.n2 - 1) * 3;
  CHECK(d.coords2[last + 0] == 1.0f);
  CHECK(d.coords2[last + 1] == 1.0f);
  CHECK(d.coords2[last + 2] == 1.0f);
  // both domains use one physical->normalized mapping
  for (i64 r = 0; r < d.n1; r += 97) {
    const i64 i = r % ph.t1.geom.dims[0];
    const i64 j = (r / ph.t1.geom.dims[0]) % ph.t1.geom.dims[1];
    const i64 k = r / (ph.t1.geom.dims[0] * ph.t1.geom.dims[1]);
    const Vec3 p = ph.t1.geom.voxel_to_physical(
        {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
    const Vec3 c = d.frame.to_normalized(p);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(c[a] - d.coords1[r * 3 + a]) < 1e-6);
      CHECK(d.coords1[r * 3 + a] >= -1.0f);
      CHECK(d.coords1[r * 3 + a] <= 1.0f);
    }
  }
  // one-hot rows are valid
  const i64 N = static_cast<i64>(d.table.size());
  for (i64 r = 0; r < d.n2; ++r) {
    int hot = 0;
    for (i64 c = 0; c < N; ++c) hot += d.onehot2[r * N + c];
    CHECK(hot == 1);
  }
}

TEST_CASE("build_domain rejects unharmonized and mismatched inputs") {
  const PhantomSpec spec = small_spec(PhantomPreset::slab, 5);
  const PhantomOutput ph = generate(spec);
  Volume bad_t1 = ph.t1;
  bad_t1.geom.origin[0] += 3.0;
  CHECK_THROWS_WITH_AS((void)build_domain(bad_t1, ph.t2, ph.seg_aniso),
                       doctest::Contains("not-harmonized"), Error);
  LabelVolume bad_seg = ph.seg_aniso;
  bad_seg.geom.spacing[2] *= 2.0;
  CHECK_THROWS_WITH_AS((void)build_domain(ph.t1, ph.t2, bad_seg),
                       doctest::Contains("grid-mismatch"), Error);
}

TEST_CASE("epoch accounting: ceil(n/batch) batches, every sample visited once") {
  const PhantomSpec spec = small_spec(PhantomPreset::shell, 7);
  const PhantomOutput ph = generate(spec);
  const TrainingDomain d = build_domain(ph.t1, ph.t2, ph.seg_aniso);
  TrainConfig tc = small_config(1);
  tc.epochs = 2;
  const i64 n_total = d.n1 + d.n2;
  const i64 expected_batches = (n_total + tc.batch_size - 1) / tc.batch_size;
  std::vector<i64> batch_count(tc.epochs, 0), sample_count(tc.epochs, 0);
  tc.batch_hook = [&](i64 epoch, i64, i64 n1b, i64 n2b) {
    batch_count[epoch] += 1;
    sample_count[epoch] += n1b + n2b;
  };
  const FitResult res = fit(d, tc);
  for (int e = 0; e < tc.epochs; ++e) {
    CHECK(batch_count[e] == expected_batches);
    CHECK(sample_count[e] == n_total);
  }
  for (const auto& el : res.trace) CHECK(std::isfinite(el.total()));
}

TEST_CASE("fit rejects bad configs") {
  const PhantomSpec spec = small_spec(PhantomPreset::shell, 7);
  const PhantomOutput ph = generate(spec);
  const TrainingDomain d = build_domain(ph.t1, ph.t2, ph.seg_aniso);
  TrainConfig tc = small_config(1);
  tc.epochs = 0;
  CHECK_THROWS_WITH_AS((void)fit(d, tc), doctest::Contains("bad-config"), Error);
}

TEST_CASE("same seed produces bitwise-identical model files, any thread count") {
  const PhantomSpec spec = small_spec(PhantomPreset::shell, 13);
  const PhantomOutput ph = generate(spec);
  const TrainingDomain d = build_domain(ph.t1, ph.t2, ph.seg_aniso);
  const TrainConfig tc = small_config(99);

  simd::set_threads(1);
  const FitResult r1 = fit(d, tc);
  simd::set_threads(4);
  const FitResult r2 = fit(d, tc);
  simd::set_threads(std::max(1u, std::thread::hardware_concurrency()));

  const std::string p1 = "/tmp/isovox_fit_a.inrm", p2 = "/tmp/isovox_fit_b.inrm";
  save_model(r1.model, p1);
  save_model(r2.model, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("training loss decreases on a small phantom") {
  const PhantomSpec spec = small_spec(PhantomPreset::shell, 21);
  const PhantomOutput ph = generate(spec);
  const TrainingDomain d = build_domain(ph.t1, ph.t2, ph.seg_aniso);
  TrainConfig tc = small_config(5);
  tc.epochs = 6;
  const FitResult res = fit(d, tc);
  REQUIRE(res.trace.size() == 6);
  CHECK(res.trace.back().total() < res.trace.front().total());
}

TEST_CASE("loss trace csv format") {
  std::vector<EpochLoss> trace = {{0, 1.0, 2.0, 3.0}, {1, 0.5, 0.25, 0.125}};
  const std::string path = "/tmp/isovox_loss.csv";
  write_loss_trace_csv(trace, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,mse_t1,mse_t2,bce,total");
  std::string row;
  std::getline(in, row);
  CHECK(row.substr(0, 2) == "0,");
  std::remove(path.c_str());
}
