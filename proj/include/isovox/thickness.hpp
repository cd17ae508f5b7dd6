#pragma once

#include <optional>
#include <string>
#include <vector>

#include "isovox/volume.hpp"

namespace isovox {

/// Exact Euclidean distance (mm, spacing-aware) from each foreground voxel
/// center to the nearest background voxel center; 0 on background. Voxels
/// outside the array are not background. A mask with no background at all
/// yields +inf on the foreground.
std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask,
                                       const GridGeometry& geom);

struct Skeleton {
  std::vector<i64> indices;    // linear voxel indices of skeleton points
  std::vector<double> radius;  // distance-transform value at each point (mm)
};

/// Discrete medial skeleton: foreground voxels whose distance value is a
/// non-strict local maximum along every one of the 13 axis/diagonal direction
/// pairs (missing neighbors count as zero clearance). Pruning drops skeleton
/// voxels whose radius falls below prune_ratio * max(radius) within their
/// 26-connected mask component.
Skeleton extract_skeleton(const std::vector<std::uint8_t>& mask,
                          const GridGeometry& geom, double prune_ratio);

struct LabelThickness {
  std::int32_t label = 0;
  std::string name;
  i64 n_voxels = 0;
  i64 n_skeleton = 0;
  std::optional<double> median_mm;  // absent when the label has no support
};

struct ThicknessResult {
  std::vector<LabelThickness> rows;
  std::optional<Volume> map;  // per-voxel thickness (mm), 0 off-support
};

/// Per-label thickness: each foreground voxel takes twice the radius of its
/// nearest skeleton point, less half a voxel of discretization offset; the
/// reported statistic is the median over the label's voxels.
ThicknessResult thickness_map(const LabelVolume& labels,
                              const std::vector<std::int32_t>& target_labels,
                              double prune_ratio, bool want_map, int jobs = 1);

void write_thickness_csv(const ThicknessResult& r, const std::string& path);

}  // namespace isovox
