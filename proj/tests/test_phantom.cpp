#include <doctest.h>

#include <cmath>

#include "isovox/phantom.hpp"
#include "isovox/resample.hpp"

using namespace isovox;

TEST_CASE("same seed gives bitwise-identical phantoms") {
  const PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::shell);
  const PhantomOutput a = generate(spec);
  const PhantomOutput b = generate(spec);
  CHECK(a.t1.data == b.t1.data);
  CHECK(a.t2.data == b.t2.data);
  CHECK(a.seg_aniso.data == b.seg_aniso.data);
  PhantomSpec other = spec;
  other.seed = 1;
  const PhantomOutput c = generate(other);
  CHECK(a.t1.data != c.t1.data);
}

TEST_CASE("constant preset: single foreground label, constant images") {
  PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::constant);
  spec.t2_dims = {10, 10, 3};
  const PhantomOutput out = generate(spec);
  for (const auto v : out.seg_aniso.data) CHECK(v == 1);
  for (const float v : out.t2.data) CHECK(std::abs(v - 0.9) < 6 * spec.noise_sigma);
  for (const float v : out.t1.data) CHECK(std::abs(v - 0.85) < 6 * spec.noise_sigma);
  CHECK(out.analytic_thickness_mm.empty());
}

TEST_CASE("slab analytic thickness is exact by construction") {
  const PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::slab);
  const PhantomOutput out = generate(spec);
  CHECK(out.analytic_thickness_mm.at(1) == 4.0);
  const PhantomSpec shell = PhantomSpec::defaults(PhantomPreset::shell);
  CHECK(generate(shell).analytic_thickness_mm.at(1) == 1.2);
  const PhantomSpec ball = PhantomSpec::defaults(PhantomPreset::ball);
  CHECK(generate(ball).analytic_thickness_mm.at(1) == 10.0);
}

TEST_CASE("noise-free generation is piecewise constant away from boundaries") {
  PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::ball);
  spec.noise_sigma = 0.0;
  const PhantomOutput out = generate(spec);
  // a voxel deep inside the ball and one far outside are exactly the map values
  const auto& g = out.t2.geom;
  const i64 ci = g.dims[0] / 2, cj = g.dims[1] / 2, ck = g.dims[2] / 2;
  CHECK(out.t2.at(ci, cj, ck) == 0.9f);
  CHECK(out.t2.at(0, 0, 0) == 0.2f);
}

TEST_CASE("t1 grid is pre-harmonized to the t2 box") {
  const PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::shell);
  const PhantomOutput out = generate(spec);
  const GridGeometry expected = harmonize_target_grid(out.t2.geom, spec.t1_spacing);
  CHECK(out.t1.geom.approx_equal(expected, 1e-9));
  // harmonizing again is a no-op
  const Volume again = harmonize_bbox(out.t1, out.t2.geom, 0.0f);
  CHECK(again.data == out.t1.data);
}

TEST_CASE("truth discretization converges to the analytic shape") {
  const PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::shell);
  const LabelVolume ref = phantom_truth_at(spec, 0.1);
  double prev = 1.0;
  for (const double s : {0.8, 0.4, 0.2}) {
    const LabelVolume coarse = phantom_truth_at(spec, s);
    const LabelVolume up = upsample_labels_nearest(coarse, ref.geom);
    i64 disagree = 0;
    for (i64 v = 0; v < ref.geom.voxel_count(); ++v)
      disagree += up.data[v] != ref.data[v];
    const double frac = static_cast<double>(disagree) / ref.geom.voxel_count();
    CHECK(frac < prev);
    prev = frac;
  }
}

TEST_CASE("invalid specs are rejected") {
  PhantomSpec spec = PhantomSpec::defaults(PhantomPreset::ball);
  spec.ball_radius = 50.0;
  CHECK_THROWS_WITH_AS((void)generate(spec), doctest::Contains("geometry-exceeds"),
                       Error);
  PhantomSpec noisy = PhantomSpec::defaults(PhantomPreset::shell);
  noisy.noise_sigma = 0.2;  // label contrast falls under 5 sigma
  CHECK_THROWS_WITH_AS((void)generate(noisy), doctest::Contains("5 noise sigma"), Error);
}
