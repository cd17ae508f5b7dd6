#include <doctest.h>

#include <cmath>

#include "isovox/phantom.hpp"
#include "isovox/rng.hpp"
#include "isovox/thickness.hpp"

using namespace isovox;

namespace {

// independent all-pairs oracle, same axis-sum order as the separable passes
std::vector<double> brute_force_dt(const std::vector<std::uint8_t>& mask,
                                   const GridGeometry& g) {
  const auto& d = g.dims;
  std::vector<double> out(mask.size(), 0.0);
  std::vector<std::array<i64, 3>> bg;
  for (i64 k = 0; k < d[2]; ++k)
    for (i64 j = 0; j < d[1]; ++j)
      for (i64 i = 0; i < d[0]; ++i)
        if (!mask[g.linear_index(i, j, k)]) bg.push_back({i, j, k});
  for (i64 k = 0; k < d[2]; ++k)
    for (i64 j = 0; j < d[1]; ++j)
      for (i64 i = 0; i < d[0]; ++i) {
        const i64 v = g.linear_index(i, j, k);
        if (!mask[v]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : bg) {
          const double dx = (i - b[0]) * g.spacing[0];
          const double dy = (j - b[1]) * g.spacing[1];
          const double dz = (k - b[2]) * g.spacing[2];
          best = std::min(best, (dx * dx + dy * dy) + dz * dz);
        }
        out[v] = std::sqrt(best);
      }
  return out;
}

}  // namespace

TEST_CASE("distance transform basics") {
  GridGeometry g;
  g.dims = {9, 9, 9};
  g.spacing = {0.4, 0.4, 0.4};
  std::vector<std::uint8_t> mask(g.voxel_count(), 0);
  mask[g.linear_index(4, 4, 4)] = 1;
  const auto dt = distance_transform(mask, g);
  CHECK(dt[g.linear_index(4, 4, 4)] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(dt[g.linear_index(0, 0, 0)] == 0.0);

  // solid slab 10 voxels thick: mid-plane distance = half thickness
  GridGeometry gs;
  gs.dims = {16, 16, 20};
  gs.spacing = {0.4, 0.4, 0.4};
  std::vector<std::uint8_t> slab(gs.voxel_count(), 0);
  for (i64 k = 5; k < 15; ++k)
    for (i64 j = 0; j < 16; ++j)
      for (i64 i = 0; i < 16; ++i) slab[gs.linear_index(i, j, k)] = 1;
  const auto dts = distance_transform(slab, gs);
  CHECK(dts[gs.linear_index(8, 8, 9)] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(dts[gs.linear_index(8, 8, 10)] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("distance transform equals brute force on random masks") {
  Rng rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    GridGeometry g;
    g.dims = {16, 16, 16};
    for (int a = 0; a < 3; ++a) g.spacing[a] = 0.3 + rng.uniform01() * 2.0;
    std::vector<std::uint8_t> mask(g.voxel_count());
    for (auto& m : mask) m = rng.uniform01() < 0.7 ? 1 : 0;
    const auto fast = distance_transform(mask, g);
    const auto slow = brute_force_dt(mask, g);
    for (std::size_t i = 0; i < mask.size(); ++i)
      CHECK(std::abs(fast[i] - slow[i]) <= 1e-9);
  }
}

TEST_CASE("skeleton of a ball collapses to the center") {
  GridGeometry g;
  g.dims = {21, 21, 21};
  g.spacing = {1, 1, 1};
  const double R = 8.0;
  const Vec3 c = {10, 10, 10};
  std::vector<std::uint8_t> mask(g.voxel_count(), 0);
  for (i64 k = 0; k < 21; ++k)
    for (i64 j = 0; j < 21; ++j)
      for (i64 i = 0; i < 21; ++i) {
        const double dx = i - c[0], dy = j - c[1], dz = k - c[2];
        if (dx * dx + dy * dy + dz * dz <= R * R) mask[g.linear_index(i, j, k)] = 1;
      }
  const Skeleton s = extract_skeleton(mask, g, 0.0);
  REQUIRE(!s.indices.empty());
  double max_r = 0;
  for (std::size_t p = 0; p < s.indices.size(); ++p) {
    const i64 v = s.indices[p];
    const double dx = static_cast<double>(v % 21) - c[0];
    const double dy = static_cast<double>((v / 21) % 21) - c[1];
    const double dz = static_cast<double>(v / (21 * 21)) - c[2];
    CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) <= 1.0 + 1e-9);
    max_r = std::max(max_r, s.radius[p]);
  }
  CHECK(std::abs(max_r - R) <= 0.5 + 1e-9);
}

TEST_CASE("skeleton of a slab lies on the mid-plane; pruning is monotone") {
  GridGeometry g;
  g.dims = {20, 20, 24};
  g.spacing = {0.5, 0.5, 0.5};
  std::vector<std::uint8_t> mask(g.voxel_count(), 0);
  for (i64 k = 7; k < 17; ++k)  // 10 voxels thick, mid-plane between k=11 and 12
    for (i64 j = 0; j < 20; ++j)
      for (i64 i = 0; i < 20; ++i) mask[g.linear_index(i, j, k)] = 1;
  const Skeleton s0 = extract_skeleton(mask, g, 0.0);
  const double mid = 11.5;
  for (const i64 v : s0.indices) {
    const double k = static_cast<double>(v / (20 * 20));
    CHECK(std::abs(k - mid) <= 0.5 + 1e-9);
  }
  const Skeleton s1 = extract_skeleton(mask, g, 0.4);
  CHECK(s1.indices.size() <= s0.indices.size());
  for (const i64 v : s1.indices)
    CHECK(std::find(s0.indices.begin(), s0.indices.end(), v) != s0.indices.end());

  CHECK_THROWS_WITH_AS(
      (void)extract_skeleton(std::vector<std::uint8_t>(g.voxel_count(), 0), g, 0.0),
      doctest::Contains("empty-mask"), Error);
}

TEST_CASE("slab and shell phantom thickness within one voxel of analytic") {
  PhantomSpec slab = PhantomSpec::defaults(PhantomPreset::slab);
  const LabelVolume slab_truth = phantom_truth_at(slab, 0.4);
  const ThicknessResult rs = thickness_map(slab_truth, {1}, 0.25, false);
  REQUIRE(rs.rows[0].median_mm.has_value());
  CHECK(std::abs(*rs.rows[0].median_mm - 4.0) <= 0.4);

  PhantomSpec shell = PhantomSpec::defaults(PhantomPreset::shell);
  const LabelVolume shell_truth = phantom_truth_at(shell, 0.4);
  const ThicknessResult rh = thickness_map(shell_truth, {1}, 0.25, false);
  REQUIRE(rh.rows[0].median_mm.has_value());
  CHECK(std::abs(*rh.rows[0].median_mm - 1.2) <= 0.4);
}

TEST_CASE("thickness values are bounded and labels are independent") {
  PhantomSpec shell = PhantomSpec::defaults(PhantomPreset::shell);
  const LabelVolume truth = phantom_truth_at(shell, 0.5);
  const ThicknessResult r = thickness_map(truth, {1, 2}, 0.25, true);
  const auto& g = truth.geom;
  const double diag = std::sqrt(
      dot({g.spacing[0] * (g.dims[0] - 1), g.spacing[1] * (g.dims[1] - 1),
           g.spacing[2] * (g.dims[2] - 1)},
          {g.spacing[0] * (g.dims[0] - 1), g.spacing[1] * (g.dims[1] - 1),
           g.spacing[2] * (g.dims[2] - 1)}));
  for (const float v : r.map->data) {
    CHECK(v >= 0.0f);
    CHECK(v <= diag);
  }

  // relabeling label 2's geometry must not change label 1's result
  LabelVolume wiped = truth;
  for (auto& v : wiped.data)
    if (v == 2) v = 0;
  const ThicknessResult r1 = thickness_map(truth, {1}, 0.25, false);
  const ThicknessResult r2 = thickness_map(wiped, {1}, 0.25, false);
  CHECK(*r1.rows[0].median_mm == *r2.rows[0].median_mm);

  // empty-support labels report as missing, not zero
  LabelVolume with_missing = truth;
  with_missing.table.entries.push_back({9, "missing"});
  const ThicknessResult rm = thickness_map(with_missing, {9}, 0.25, false);
  CHECK(rm.rows[0].n_voxels == 0);
  CHECK(!rm.rows[0].median_mm.has_value());
  CHECK_THROWS_WITH_AS((void)thickness_map(truth, {42}, 0.25, false),
                       doctest::Contains("label-missing"), Error);
}

TEST_CASE("uniform spacing scale multiplies thickness exactly") {
  PhantomSpec shell = PhantomSpec::defaults(PhantomPreset::shell);
  LabelVolume truth = phantom_truth_at(shell, 0.4);
  const ThicknessResult base = thickness_map(truth, {1}, 0.25, false);
  LabelVolume scaled = truth;
  for (int a = 0; a < 3; ++a) scaled.geom.spacing[a] *= 2.0;  // power of two
  const ThicknessResult twice = thickness_map(scaled, {1}, 0.25, false);
  CHECK(*twice.rows[0].median_mm == 2.0 * *base.rows[0].median_mm);
}

TEST_CASE("per-label parallelism gives identical results") {
  PhantomSpec shell = PhantomSpec::defaults(PhantomPreset::shell);
  const LabelVolume truth = phantom_truth_at(shell, 0.6);
  const ThicknessResult serial = thickness_map(truth, {1, 2}, 0.25, false, 1);
  const ThicknessResult parallel = thickness_map(truth, {1, 2}, 0.25, false, 4);
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i].n_skeleton == parallel.rows[i].n_skeleton);
    CHECK(*serial.rows[i].median_mm == *parallel.rows[i].median_mm);
  }
}
