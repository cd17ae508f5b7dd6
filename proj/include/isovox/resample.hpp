#pragma once

#include <optional>

#include "isovox/model.hpp"
#include "isovox/volume.hpp"

namespace isovox {

/// Uniform isotropic grid over a physical box (given as voxel-edge bounds in
/// the direction frame). dims = ceil(extent / spacing) per axis; voxel centers
/// sit at lo + (i + 0.5) * spacing.
struct IsoGridSpec {
  double spacing = 0.4;
  double direction[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  Vec3 lo{0, 0, 0};
  Vec3 hi{1, 1, 1};

  /// Box = the source grid's voxel-edge footprint.
  static IsoGridSpec from_grid_edges(const GridGeometry& g, double spacing);
  GridGeometry build_grid() const;
};

struct SampledVolumes {
  std::optional<LabelVolume> seg;
  std::optional<Volume> t1, t2;
};

/// Runs the trained network at every grid voxel center (dropout off).
/// Centers are mapped through the model's shared frame and clamped to the
/// [-1,1] cube before encoding; seg is the argmax over the sigmoid channels
/// and intensities are de-normalized with the stored ranges.
SampledVolumes sample_inr(const InrModel<float>& m, const GridGeometry& grid,
                          bool want_seg, bool want_t1, bool want_t2);

struct AtlasVolumes {
  LabelVolume seg;
  Volume t1, t2;
};

/// Hybrid atlas: INR segmentation plus trilinear resampling of the original
/// intensity volumes onto the same grid.
AtlasVolumes assemble_atlas(const InrModel<float>& m, const Volume& t1,
                            const Volume& t2, const GridGeometry& grid);

/// Majority vote of fine-grid labels whose centers fall in each reference
/// voxel cell; ties to the lowest id, empty cells to the nearest fine center.
LabelVolume downsample_labels(const LabelVolume& fine, const GridGeometry& reference);

/// Nearest-neighbor label upsampling (the baseline the INR is compared with).
LabelVolume upsample_labels_nearest(const LabelVolume& src, const GridGeometry& grid);

}  // namespace isovox
