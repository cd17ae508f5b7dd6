#include "isovox/volume.hpp"

#include <algorithm>
#include <cmath>

namespace isovox {

namespace {

// Voxel indices that land within this distance of an integer are snapped, so
// sampling exactly at a voxel center reproduces the stored value bit-for-bit.
constexpr double kSnapTol = 1e-6;

double snap_index(double c) {
  const double r = std::round(c);
  return std::abs(c - r) < kSnapTol ? r : c;
}

}  // namespace

Vec3 GridGeometry::voxel_to_physical(const Vec3& index) const {
  Vec3 p = origin;
  for (int a = 0; a < 3; ++a) {
    const double step = spacing[a] * index[a];
    p[0] += direction[0][a] * step;
    p[1] += direction[1][a] * step;
    p[2] += direction[2][a] * step;
  }
  return p;
}

Vec3 GridGeometry::physical_to_voxel(const Vec3& physical) const {
  const Vec3 rel = physical - origin;
  Vec3 idx;
  for (int a = 0; a < 3; ++a) idx[a] = dot(axis(a), rel) / spacing[a];
  return idx;
}

void GridGeometry::center_bounds(Vec3& lo, Vec3& hi) const {
  for (int a = 0; a < 3; ++a) {
    lo[a] = dot(axis(a), origin);
    hi[a] = lo[a] + spacing[a] * static_cast<double>(dims[a] - 1);
  }
}

bool GridGeometry::same_directions(const GridGeometry& other, double tol) const {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(direction[r][c] - other.direction[r][c]) > tol) return false;
  return true;
}

bool GridGeometry::approx_equal(const GridGeometry& other, double tol) const {
  if (dims != other.dims || !same_directions(other, tol)) return false;
  for (int a = 0; a < 3; ++a)
    if (std::abs(spacing[a] - other.spacing[a]) > tol ||
        std::abs(origin[a] - other.origin[a]) > tol)
      return false;
  return true;
}

void GridGeometry::quantize_to_file_precision() {
  for (int a = 0; a < 3; ++a) {
    spacing[a] = static_cast<double>(static_cast<float>(spacing[a]));
    origin[a] = static_cast<double>(static_cast<float>(origin[a]));
    for (int r = 0; r < 3; ++r)
      direction[r][a] = static_cast<double>(static_cast<float>(direction[r][a]));
  }
}

void GridGeometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    require(dims[a] >= 1, "bad-dims", "grid dims must be positive");
    require(spacing[a] > 0.0, "bad-spacing", "grid spacing must be strictly positive");
  }
  for (int a = 0; a < 3; ++a) {
    const Vec3 da = axis(a);
    require(std::abs(dot(da, da) - 1.0) < 1e-6, "bad-direction",
            "direction columns must be unit vectors");
    for (int b = a + 1; b < 3; ++b)
      require(std::abs(dot(da, axis(b))) < 1e-6, "bad-direction",
              "direction columns must be orthogonal");
  }
}

void Volume::validate() const {
  geom.validate();
  require(static_cast<i64>(data.size()) == geom.voxel_count(), "bad-data",
          "data length does not match grid dims");
}

bool LabelTable::contains(std::int32_t id) const {
  for (const auto& [eid, _] : entries)
    if (eid == id) return true;
  return false;
}

std::size_t LabelTable::index_of(std::int32_t id) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].first == id) return i;
  fail("label-missing", "label id " + std::to_string(id) + " not in table");
}

const std::string& LabelTable::name(std::int32_t id) const {
  return entries[index_of(id)].second;
}

void LabelTable::validate() const {
  require(!entries.empty(), "bad-table", "label table is empty");
  for (std::size_t i = 0; i + 1 < entries.size(); ++i)
    require(entries[i].first < entries[i + 1].first, "bad-table",
            "label ids must be unique and sorted");
  require(entries.front().first == 0, "bad-table", "background label 0 must be present");
}

void LabelVolume::validate() const {
  geom.validate();
  require(static_cast<i64>(data.size()) == geom.voxel_count(), "bad-data",
          "data length does not match grid dims");
  table.validate();
  for (const std::int32_t v : data)
    require(table.contains(v), "label-missing",
            "voxel label " + std::to_string(v) + " not in table");
}

void OneHotStack::validate() const {
  geom.validate();
  table.validate();
  require(channels.size() == table.size(), "bad-onehot",
          "channel count must equal label table size");
  const i64 n = geom.voxel_count();
  for (const auto& ch : channels)
    require(static_cast<i64>(ch.size()) == n, "bad-onehot", "channel length mismatch");
  for (i64 v = 0; v < n; ++v) {
    int hot = 0;
    for (const auto& ch : channels) hot += ch[v];
    require(hot == 1, "bad-onehot", "exactly one channel must be hot per voxel");
  }
}

namespace {

struct ClampedIndex {
  Vec3 c;  // snapped and clamped continuous index
};

ClampedIndex locate(const GridGeometry& g, const Vec3& physical) {
  Vec3 c = g.physical_to_voxel(physical);
  for (int a = 0; a < 3; ++a) {
    c[a] = snap_index(c[a]);
    c[a] = std::clamp(c[a], 0.0, static_cast<double>(g.dims[a] - 1));
  }
  return {c};
}

// Nearest integer with ties toward the lower index.
i64 nearest_index(double c, i64 dim) {
  const i64 i = static_cast<i64>(std::ceil(c - 0.5));
  return std::clamp<i64>(i, 0, dim - 1);
}

}  // namespace

float interpolate(const Volume& v, const Vec3& physical, InterpMode mode) {
  const auto [c] = locate(v.geom, physical);
  const auto& d = v.geom.dims;
  if (mode == InterpMode::nearest) {
    return v.at(nearest_index(c[0], d[0]), nearest_index(c[1], d[1]),
                nearest_index(c[2], d[2]));
  }
  i64 i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::clamp<i64>(static_cast<i64>(std::floor(c[a])), 0, d[a] - 1);
    f[a] = c[a] - static_cast<double>(i0[a]);
  }
  const i64 i1[3] = {std::min(i0[0] + 1, d[0] - 1), std::min(i0[1] + 1, d[1] - 1),
                     std::min(i0[2] + 1, d[2] - 1)};
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                         (dz ? f[2] : 1.0 - f[2]);
        if (w == 0.0) continue;
        acc += w * static_cast<double>(v.at(dx ? i1[0] : i0[0], dy ? i1[1] : i0[1],
                                            dz ? i1[2] : i0[2]));
      }
  return static_cast<float>(acc);
}

std::int32_t nearest_label(const LabelVolume& v, const Vec3& physical) {
  Vec3 c = v.geom.physical_to_voxel(physical);
  const auto& d = v.geom.dims;
  for (int a = 0; a < 3; ++a) c[a] = snap_index(c[a]);
  return v.at(nearest_index(c[0], d[0]), nearest_index(c[1], d[1]),
              nearest_index(c[2], d[2]));
}

OneHotStack one_hot(const LabelVolume& seg) {
  seg.validate();
  OneHotStack out;
  out.geom = seg.geom;
  out.table = seg.table;
  const i64 n = seg.geom.voxel_count();
  out.channels.assign(seg.table.size(), std::vector<std::uint8_t>(n, 0));
  for (i64 v = 0; v < n; ++v) out.channels[seg.table.index_of(seg.data[v])][v] = 1;
  return out;
}

LabelVolume argmax_labels(const std::vector<Volume>& channels, const LabelTable& table) {
  require(channels.size() == table.size(), "bad-onehot",
          "channel count must equal label table size");
  require(!channels.empty(), "bad-onehot", "no channels");
  for (const auto& ch : channels)
    require(ch.geom.approx_equal(channels[0].geom), "grid-mismatch",
            "argmax channels must share one grid");
  LabelVolume out;
  out.geom = channels[0].geom;
  out.table = table;
  const i64 n = out.geom.voxel_count();
  out.data.resize(n);
  for (i64 v = 0; v < n; ++v) {
    std::size_t best = 0;
    float best_val = channels[0].data[v];
    for (std::size_t c = 1; c < channels.size(); ++c)
      if (channels[c].data[v] > best_val) {
        best = c;
        best_val = channels[c].data[v];
      }
    out.data[v] = table.entries[best].first;
  }
  return out;
}

GridGeometry harmonize_target_grid(const GridGeometry& reference, const Vec3& spacing) {
  Vec3 lo, hi;
  reference.center_bounds(lo, hi);
  GridGeometry g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g.direction[r][c] = reference.direction[r][c];
  g.spacing = spacing;
  Vec3 start;
  for (int a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    const double ratio = extent / spacing[a];
    g.dims[a] = std::max<i64>(1, static_cast<i64>(std::floor(ratio * (1.0 + 1e-6))) + 1);
    const double span = spacing[a] * static_cast<double>(g.dims[a] - 1);
    start[a] = 0.5 * (lo[a] + hi[a]) - 0.5 * span;
  }
  g.origin = {0.0, 0.0, 0.0};
  for (int a = 0; a < 3; ++a) g.origin = g.origin + start[a] * g.axis(a);
  g.quantize_to_file_precision();
  return g;
}

Volume harmonize_bbox(const Volume& moving, const GridGeometry& reference, float fill) {
  moving.validate();
  reference.validate();
  require(moving.geom.same_directions(reference), "direction-mismatch",
          "moving and reference volumes must share axis directions");
  const GridGeometry target = harmonize_target_grid(reference, moving.geom.spacing);
  const double tol = 1e-5 * std::min({moving.geom.spacing[0], moving.geom.spacing[1],
                                      moving.geom.spacing[2]});
  if (moving.geom.approx_equal(target, tol)) return moving;

  Volume out;
  out.geom = target;
  out.data.resize(target.voxel_count());
  const auto& md = moving.geom.dims;
  i64 idx = 0;
  for (i64 k = 0; k < target.dims[2]; ++k)
    for (i64 j = 0; j < target.dims[1]; ++j)
      for (i64 i = 0; i < target.dims[0]; ++i, ++idx) {
        const Vec3 p = target.voxel_to_physical(
            {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
        Vec3 c = moving.geom.physical_to_voxel(p);
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          c[a] = snap_index(c[a]);
          if (c[a] < 0.0 || c[a] > static_cast<double>(md[a] - 1)) inside = false;
        }
        out.data[idx] = inside ? interpolate(moving, p, InterpMode::trilinear) : fill;
      }
  return out;
}

}  // namespace isovox
