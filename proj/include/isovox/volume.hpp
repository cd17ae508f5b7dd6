#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "isovox/common.hpp"

namespace isovox {

/// Regular 3-D grid placed in physical space (millimeters).
/// `direction` columns are the physical directions of the voxel axes and must
/// form an orthonormal signed permutation; data is stored x-fastest.
struct GridGeometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  double direction[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  i64 voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  i64 linear_index(i64 i, i64 j, i64 k) const { return i + dims[0] * (j + dims[1] * k); }

  Vec3 axis(int a) const { return {direction[0][a], direction[1][a], direction[2][a]}; }

  Vec3 voxel_to_physical(const Vec3& index) const;
  Vec3 physical_to_voxel(const Vec3& physical) const;

  /// Bounds of the voxel-center box, expressed as projections onto the
  /// direction axes (lo[a] = axis(a) . center of voxel 0 along a).
  void center_bounds(Vec3& lo, Vec3& hi) const;

  bool same_directions(const GridGeometry& other, double tol = 1e-6) const;
  bool approx_equal(const GridGeometry& other, double tol = 1e-6) const;

  /// Snaps spacing/origin/direction to float32 so that NIfTI round trips are
  /// bitwise; applied when grids are created, not when they are read.
  void quantize_to_file_precision();

  void validate() const;
};

struct Volume {
  GridGeometry geom;
  std::vector<float> data;

  float at(i64 i, i64 j, i64 k) const { return data[geom.linear_index(i, j, k)]; }
  float& at(i64 i, i64 j, i64 k) { return data[geom.linear_index(i, j, k)]; }
  void validate() const;
};

struct LabelTable {
  // sorted by id; id 0 (background) always present
  std::vector<std::pair<std::int32_t, std::string>> entries;

  std::size_t size() const { return entries.size(); }
  bool contains(std::int32_t id) const;
  std::size_t index_of(std::int32_t id) const;  // throws if absent
  const std::string& name(std::int32_t id) const;
  void validate() const;
};

struct LabelVolume {
  GridGeometry geom;
  std::vector<std::int32_t> data;
  LabelTable table;

  std::int32_t at(i64 i, i64 j, i64 k) const { return data[geom.linear_index(i, j, k)]; }
  std::int32_t& at(i64 i, i64 j, i64 k) { return data[geom.linear_index(i, j, k)]; }
  void validate() const;
};

/// One channel per label-table entry (background included); exactly one
/// channel is hot per voxel.
struct OneHotStack {
  GridGeometry geom;
  LabelTable table;
  std::vector<std::vector<std::uint8_t>> channels;  // table order

  void validate() const;
};

enum class InterpMode { trilinear, nearest };

/// Samples a volume at a physical point. Points outside the voxel-center hull
/// are clamped to the hull. Nearest-neighbor ties break toward the lower index.
float interpolate(const Volume& v, const Vec3& physical, InterpMode mode);

/// Nearest-center label lookup with the same clamping and tie rules.
std::int32_t nearest_label(const LabelVolume& v, const Vec3& physical);

OneHotStack one_hot(const LabelVolume& seg);

/// Per voxel, the label of the maximal channel; ties go to the lowest label id
/// (channel order is label-table order). Channels must share one grid.
LabelVolume argmax_labels(const std::vector<Volume>& channels, const LabelTable& table);

/// The grid a moving volume is resampled onto by harmonize_bbox: reference
/// axis directions, the given spacing, and the largest centered grid whose
/// voxel-center box fits inside the reference's.
GridGeometry harmonize_target_grid(const GridGeometry& reference, const Vec3& spacing);

/// Crops/pads (and trilinearly resamples) `moving` so its physical bounding
/// box matches the reference's; voxels outside the moving volume take `fill`.
/// A moving volume already on the target grid is returned unchanged, which
/// makes the operation idempotent bit-for-bit.
Volume harmonize_bbox(const Volume& moving, const GridGeometry& reference, float fill);

}  // namespace isovox
