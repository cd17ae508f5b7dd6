#include <doctest.h>

#include <cmath>

#include "isovox/rng.hpp"
#include "isovox/volume.hpp"

using namespace isovox;

namespace {

GridGeometry random_grid(Rng& rng) {
  GridGeometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = 2 + static_cast<i64>(rng.bounded(6));
    g.spacing[a] = 0.25 + rng.uniform01() * 2.0;
    g.origin[a] = rng.uniform(-20.0, 20.0);
  }
  // random signed permutation
  int perm[3] = {0, 1, 2};
  std::swap(perm[0], perm[rng.bounded(3)]);
  std::swap(perm[1], perm[1 + rng.bounded(2)]);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g.direction[r][c] = 0.0;
  for (int c = 0; c < 3; ++c) g.direction[perm[c]][c] = rng.uniform01() < 0.5 ? -1.0 : 1.0;
  g.quantize_to_file_precision();
  g.validate();
  return g;
}

Volume affine_volume(const GridGeometry& g, double ax, double ay, double az, double c) {
  Volume v;
  v.geom = g;
  v.data.resize(g.voxel_count());
  i64 idx = 0;
  for (i64 k = 0; k < g.dims[2]; ++k)
    for (i64 j = 0; j < g.dims[1]; ++j)
      for (i64 i = 0; i < g.dims[0]; ++i, ++idx) {
        const Vec3 p = g.voxel_to_physical(
            {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
        v.data[idx] = static_cast<float>(ax * p[0] + ay * p[1] + az * p[2] + c);
      }
  return v;
}

}  // namespace

TEST_CASE("voxel/physical transforms are mutual inverses") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const GridGeometry g = random_grid(rng);
    CHECK(g.voxel_to_physical({0, 0, 0}) == g.origin);
    for (int i = 0; i < 100; ++i) {
      const Vec3 idx = {rng.uniform(-3.0, 10.0), rng.uniform(-3.0, 10.0),
                       rng.uniform(-3.0, 10.0)};
      const Vec3 back = g.physical_to_voxel(g.voxel_to_physical(idx));
      for (int a = 0; a < 3; ++a) CHECK(std::abs(back[a] - idx[a]) < 1e-9);
    }
  }
}

TEST_CASE("identity-direction arithmetic example") {
  GridGeometry g;
  g.dims = {4, 4, 4};
  g.spacing = {1.0, 2.0, 3.0};
  const Vec3 p = g.voxel_to_physical({1, 1, 1});
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 2.0);
  CHECK(p[2] == 3.0);
}

TEST_CASE("trilinear interpolation is exact on affine fields") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    GridGeometry g = random_grid(rng);
    g.dims = {5 + static_cast<i64>(rng.bounded(4)), 6, 4};
    const Volume v = affine_volume(g, 1.0, 2.0, 3.0, 0.25);
    Vec3 lo, hi;
    g.center_bounds(lo, hi);
    for (int i = 0; i < 1000; ++i) {
      Vec3 frame_pt;
      for (int a = 0; a < 3; ++a) frame_pt[a] = rng.uniform(lo[a], hi[a]);
      // convert frame coords back to world point
      Vec3 p = {0, 0, 0};
      for (int a = 0; a < 3; ++a) p = p + frame_pt[a] * g.axis(a);
      const double expect = 1.0 * p[0] + 2.0 * p[1] + 3.0 * p[2] + 0.25;
      const double got = interpolate(v, p, InterpMode::trilinear);
      CHECK(std::abs(got - expect) <= 1e-9 * std::max(1.0, std::abs(expect)) + 2e-5);
    }
  }
}

TEST_CASE("interpolation basics: centers, midpoints, clamping, bounds") {
  GridGeometry g;
  g.dims = {3, 3, 3};
  g.spacing = {1, 1, 1};
  Volume v;
  v.geom = g;
  v.data.assign(27, 0.0f);
  v.at(1, 1, 1) = 2.0f;
  v.at(2, 1, 1) = 4.0f;

  CHECK(interpolate(v, {1, 1, 1}, InterpMode::trilinear) == 2.0f);
  CHECK(interpolate(v, {1.5, 1, 1}, InterpMode::trilinear) == 3.0f);
  // outside the center hull clamps
  CHECK(interpolate(v, {2.9, 1, 1}, InterpMode::trilinear) == 4.0f);
  CHECK(interpolate(v, {-5, 1, 1}, InterpMode::trilinear) == 0.0f);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
    const float val = interpolate(v, p, InterpMode::trilinear);
    CHECK(val >= 0.0f);
    CHECK(val <= 4.0f);
  }
}

TEST_CASE("nearest-neighbor ties break toward the lower index") {
  GridGeometry g;
  g.dims = {2, 1, 1};
  LabelVolume lv;
  lv.geom = g;
  lv.data = {0, 5};
  lv.table.entries = {{0, "background"}, {5, "five"}};
  // midpoint between centers 0 and 1
  CHECK(nearest_label(lv, {0.5, 0, 0}) == 0);
  CHECK(nearest_label(lv, {0.51, 0, 0}) == 5);
}

TEST_CASE("one_hot/argmax round trip and tie rules") {
  Rng rng(17);
  GridGeometry g;
  g.dims = {4, 3, 2};
  LabelVolume seg;
  seg.geom = g;
  seg.table.entries = {{0, "background"}, {3, "a"}, {7, "b"}};
  seg.data.resize(g.voxel_count());
  for (auto& v : seg.data) {
    const std::uint64_t r = rng.bounded(3);
    v = r == 0 ? 0 : (r == 1 ? 3 : 7);
  }
  const OneHotStack oh = one_hot(seg);
  oh.validate();
  std::vector<Volume> channels(oh.channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    channels[c].geom = g;
    channels[c].data.assign(oh.channels[c].begin(), oh.channels[c].end());
  }
  const LabelVolume back = argmax_labels(channels, seg.table);
  CHECK(back.data == seg.data);

  // probs (0.2, 0.2, 0.6) with labels (0, 5, 7) -> 7; ties -> lowest id
  LabelTable t2;
  t2.entries = {{0, "bg"}, {5, "x"}, {7, "y"}};
  std::vector<Volume> probs(3);
  GridGeometry g1;
  g1.dims = {1, 1, 1};
  for (auto& p : probs) p.geom = g1;
  probs[0].data = {0.2f};
  probs[1].data = {0.2f};
  probs[2].data = {0.6f};
  CHECK(argmax_labels(probs, t2).data[0] == 7);
  probs[0].data = {0.5f};
  probs[1].data = {0.5f};
  probs[2].data = {0.0f};
  CHECK(argmax_labels(probs, t2).data[0] == 0);
}

TEST_CASE("harmonize_bbox pads with fill and is idempotent") {
  // moving grid covers less in +z than the reference
  GridGeometry ref;
  ref.dims = {6, 6, 6};
  ref.spacing = {1, 1, 1};
  GridGeometry mov_geom;
  mov_geom.dims = {6, 6, 3};
  mov_geom.spacing = {1, 1, 1};
  Volume mov;
  mov.geom = mov_geom;
  mov.data.assign(mov_geom.voxel_count(), 2.5f);

  const Volume out = harmonize_bbox(mov, ref, -1.0f);
  CHECK(out.geom.dims[2] == 6);
  // +z face beyond the moving volume takes the fill value
  CHECK(out.at(3, 3, 5) == -1.0f);
  // coincident voxel centers keep their values
  bool found_orig = false;
  for (i64 k = 0; k < out.geom.dims[2]; ++k)
    if (out.at(3, 3, k) == 2.5f) found_orig = true;
  CHECK(found_orig);

  const Volume again = harmonize_bbox(out, ref, -1.0f);
  CHECK(again.geom.approx_equal(out.geom, 0.0));
  CHECK(again.data == out.data);
}

TEST_CASE("harmonize_bbox matches corners exactly for commensurate grids") {
  GridGeometry ref;
  ref.dims = {9, 9, 5};
  ref.spacing = {0.5, 0.5, 1.0};
  ref.origin = {3.0, -2.0, 1.0};
  Volume mov;
  GridGeometry mg;
  mg.dims = {20, 20, 20};
  mg.spacing = {0.25, 0.25, 0.25};  // divides the reference extents evenly
  mg.origin = {2.0, -3.0, 0.0};
  mov.geom = mg;
  mov.data.assign(mg.voxel_count(), 1.0f);
  const Volume out = harmonize_bbox(mov, ref, 0.0f);
  Vec3 rlo, rhi, olo, ohi;
  ref.center_bounds(rlo, rhi);
  out.geom.center_bounds(olo, ohi);
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(olo[a] - rlo[a]) < 1e-6);
    CHECK(std::abs(ohi[a] - rhi[a]) < 1e-6);
  }
}

TEST_CASE("harmonize_bbox with incommensurate spacing stays inside and close") {
  // the 0.5/0.4-style mismatch cannot match corners exactly; the grid must
  // stay inside the reference box and miss each corner by less than a voxel
  GridGeometry ref;
  ref.dims = {48, 48, 8};
  ref.spacing = {0.4, 0.4, 2.6};
  Volume mov;
  GridGeometry mg;
  mg.dims = {40, 40, 22};
  mg.spacing = {0.5, 0.5, 1.0};
  mg.origin = {-1.0, -1.0, -1.0};
  mov.geom = mg;
  mov.data.assign(mg.voxel_count(), 1.0f);
  const Volume out = harmonize_bbox(mov, ref, 0.0f);
  Vec3 rlo, rhi, olo, ohi;
  ref.center_bounds(rlo, rhi);
  out.geom.center_bounds(olo, ohi);
  for (int a = 0; a < 3; ++a) {
    CHECK(olo[a] >= rlo[a] - 1e-5);
    CHECK(ohi[a] <= rhi[a] + 1e-5);
    CHECK(olo[a] - rlo[a] <= 0.5 * mg.spacing[a] + 1e-5);
    CHECK(rhi[a] - ohi[a] <= 0.5 * mg.spacing[a] + 1e-5);
  }
  CHECK_THROWS_AS(
      (void)harmonize_bbox(mov, [] {
        GridGeometry g;
        g.direction[0][0] = 0;
        g.direction[1][0] = 1;
        g.direction[0][1] = 1;
        g.direction[1][1] = 0;
        return g;
      }(), 0.0f),
      Error);
}
