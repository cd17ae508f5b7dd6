#include "isovox/resample.hpp"

#include <algorithm>
#include <cmath>

#include "isovox/simd/kernels.hpp"

namespace isovox {

IsoGridSpec IsoGridSpec::from_grid_edges(const GridGeometry& g, double spacing) {
  IsoGridSpec s;
  s.spacing = spacing;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) s.direction[r][c] = g.direction[r][c];
  Vec3 lo, hi;
  g.center_bounds(lo, hi);
  for (int a = 0; a < 3; ++a) {
    s.lo[a] = lo[a] - 0.5 * g.spacing[a];
    s.hi[a] = hi[a] + 0.5 * g.spacing[a];
  }
  return s;
}

GridGeometry IsoGridSpec::build_grid() const {
  require(spacing > 0.0, "bad-spacing", "grid spacing must be > 0");
  GridGeometry g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g.direction[r][c] = direction[r][c];
  g.spacing = {spacing, spacing, spacing};
  for (int a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    require(extent > 0.0, "bad-bbox", "grid box extent must be positive");
    const double ratio = extent / spacing;
    g.dims[a] = std::max<i64>(1, static_cast<i64>(std::ceil(ratio * (1.0 - 1e-6))));
  }
  g.origin = {0, 0, 0};
  for (int a = 0; a < 3; ++a)
    g.origin = g.origin + (lo[a] + 0.5 * spacing) * g.axis(a);
  g.quantize_to_file_precision();
  g.validate();
  return g;
}

namespace {

void frame_bounds_overlap_check(const NormFrame& frame, const GridGeometry& grid) {
  // Compare boxes along the frame axes; the grid's center box must intersect
  // the training box.
  Vec3 glo, ghi;
  grid.center_bounds(glo, ghi);
  for (int a = 0; a < 3; ++a) {
    require(glo[a] <= frame.hi[a] + 1e-9 && ghi[a] >= frame.lo[a] - 1e-9, "bbox-disjoint",
            "sampling grid does not intersect the model's training box");
  }
}

}  // namespace

SampledVolumes sample_inr(const InrModel<float>& m, const GridGeometry& grid,
                          bool want_seg, bool want_t1, bool want_t2) {
  m.validate();
  grid.validate();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      require(std::abs(grid.direction[r][c] - m.frame.direction[r][c]) < 1e-6,
              "direction-mismatch", "sampling grid axes must match the model frame");
  frame_bounds_overlap_check(m.frame, grid);

  const i64 n = grid.voxel_count();
  const i64 N = m.arch.n_labels;
  SampledVolumes out;
  if (want_seg) {
    out.seg.emplace();
    out.seg->geom = grid;
    out.seg->table = m.label_table;
    out.seg->data.resize(n);
  }
  if (want_t1) {
    out.t1.emplace();
    out.t1->geom = grid;
    out.t1->data.resize(n);
  }
  if (want_t2) {
    out.t2.emplace();
    out.t2->geom = grid;
    out.t2->data.resize(n);
  }
  if (!want_seg && !want_t1 && !want_t2) return out;

  const i64 chunk = 16384;
  BatchBuffers<float> bb;
  std::vector<float> coords;
  for (i64 base = 0; base < n; base += chunk) {
    const i64 rows = std::min(chunk, n - base);
    coords.resize(rows * 3);
    simd::parallel_for(rows, [&](i64 r0, i64 r1) {
      for (i64 r = r0; r < r1; ++r) {
        const i64 v = base + r;
        const i64 i = v % grid.dims[0];
        const i64 j = (v / grid.dims[0]) % grid.dims[1];
        const i64 k = v / (grid.dims[0] * grid.dims[1]);
        const Vec3 p = grid.voxel_to_physical(
            {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
        const Vec3 c = m.frame.to_normalized(p);
        for (int a = 0; a < 3; ++a)
          coords[r * 3 + a] = static_cast<float>(std::clamp(c[a], -1.0, 1.0));
      }
    });
    bb.ensure(rows, m.arch);
    simd::parallel_for(rows, [&](i64 r0, i64 r1) {
      for (i64 r = r0; r < r1; ++r)
        m.encoder.encode(coords.data() + r * 3, bb.x0.data() + r * m.arch.feature_count());
    });
    const HeadRanges hr{0, want_t1 ? rows : 0, 0, (want_seg || want_t2) ? rows : 0};
    forward_encoded(m, rows, hr, false, 0, bb);
    for (i64 r = 0; r < rows; ++r) {
      const i64 v = base + r;
      if (want_t1)
        out.t1->data[v] = static_cast<float>(
            double(bb.p_t1[r]) * (m.norm.t1_max - m.norm.t1_min) + m.norm.t1_min);
      if (want_t2)
        out.t2->data[v] = static_cast<float>(
            double(bb.p_t2[r]) * (m.norm.t2_max - m.norm.t2_min) + m.norm.t2_min);
      if (want_seg) {
        const float* p = bb.p_seg.data() + r * N;
        i64 best = 0;
        for (i64 c = 1; c < N; ++c)
          if (p[c] > p[best]) best = c;
        out.seg->data[v] = m.label_table.entries[best].first;
      }
    }
  }
  return out;
}

AtlasVolumes assemble_atlas(const InrModel<float>& m, const Volume& t1, const Volume& t2,
                            const GridGeometry& grid) {
  t1.validate();
  t2.validate();
  require(t1.geom.approx_equal(m.t1_geom, 1e-4) && t2.geom.approx_equal(m.t2_geom, 1e-4),
          "grid-mismatch", "intensity volumes do not match the model's training grids");
  SampledVolumes s = sample_inr(m, grid, true, false, false);
  AtlasVolumes out;
  out.seg = std::move(*s.seg);
  out.t1.geom = grid;
  out.t2.geom = grid;
  const i64 n = grid.voxel_count();
  out.t1.data.resize(n);
  out.t2.data.resize(n);
  simd::parallel_for(n, [&](i64 v0, i64 v1) {
    for (i64 v = v0; v < v1; ++v) {
      const i64 i = v % grid.dims[0];
      const i64 j = (v / grid.dims[0]) % grid.dims[1];
      const i64 k = v / (grid.dims[0] * grid.dims[1]);
      const Vec3 p = grid.voxel_to_physical(
          {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
      out.t1.data[v] = interpolate(t1, p, InterpMode::trilinear);
      out.t2.data[v] = interpolate(t2, p, InterpMode::trilinear);
    }
  });
  return out;
}

LabelVolume downsample_labels(const LabelVolume& fine, const GridGeometry& reference) {
  fine.validate();
  reference.validate();

  LabelVolume out;
  out.geom = reference;
  out.table = fine.table;
  const i64 nref = reference.voxel_count();
  const i64 N = static_cast<i64>(fine.table.size());
  out.data.assign(nref, 0);
  std::vector<std::int32_t> votes(nref * N, 0);

  const i64 nfine = fine.geom.voxel_count();
  i64 inside_total = 0;
  i64 v = 0;
  for (i64 k = 0; k < fine.geom.dims[2]; ++k)
    for (i64 j = 0; j < fine.geom.dims[1]; ++j)
      for (i64 i = 0; i < fine.geom.dims[0]; ++i, ++v) {
        const Vec3 p = fine.geom.voxel_to_physical(
            {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
        const Vec3 c = reference.physical_to_voxel(p);
        bool inside = true;
        i64 cell[3];
        for (int a = 0; a < 3; ++a) {
          cell[a] = static_cast<i64>(std::floor(c[a] + 0.5));
          if (cell[a] < 0 || cell[a] >= reference.dims[a]) inside = false;
        }
        if (!inside) continue;
        ++inside_total;
        const i64 ref_idx = reference.linear_index(cell[0], cell[1], cell[2]);
        votes[ref_idx * N + fine.table.index_of(fine.data[v])] += 1;
      }
  require(inside_total > 0 && nfine > 0, "bbox-disjoint",
          "fine and reference grids do not overlap");

  for (i64 r = 0; r < nref; ++r) {
    const std::int32_t* row = votes.data() + r * N;
    i64 best = -1;
    for (i64 c = 0; c < N; ++c)
      if (row[c] > 0 && (best < 0 || row[c] > row[best])) best = c;
    if (best >= 0) {
      out.data[r] = fine.table.entries[best].first;
    } else {
      const i64 i = r % reference.dims[0];
      const i64 j = (r / reference.dims[0]) % reference.dims[1];
      const i64 k = r / (reference.dims[0] * reference.dims[1]);
      const Vec3 p = reference.voxel_to_physical(
          {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
      out.data[r] = nearest_label(fine, p);
    }
  }
  return out;
}

LabelVolume upsample_labels_nearest(const LabelVolume& src, const GridGeometry& grid) {
  src.validate();
  grid.validate();
  LabelVolume out;
  out.geom = grid;
  out.table = src.table;
  const i64 n = grid.voxel_count();
  out.data.resize(n);
  simd::parallel_for(n, [&](i64 v0, i64 v1) {
    for (i64 v = v0; v < v1; ++v) {
      const i64 i = v % grid.dims[0];
      const i64 j = (v / grid.dims[0]) % grid.dims[1];
      const i64 k = v / (grid.dims[0] * grid.dims[1]);
      const Vec3 p = grid.voxel_to_physical(
          {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
      out.data[v] = nearest_label(src, p);
    }
  });
  return out;
}

}  // namespace isovox
