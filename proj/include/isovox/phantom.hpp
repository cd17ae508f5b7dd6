#pragma once

#include <map>
#include <string>

#include "isovox/volume.hpp"

namespace isovox {

enum class PhantomPreset { shell, slab, ball, constant };

PhantomPreset parse_preset(const std::string& name);
const char* preset_name(PhantomPreset p);

/// Synthetic multi-contrast patch pair with analytic segmentation. The scene
/// is defined in continuous physical space; voxel intensities are
/// supersampled so coarse axes show realistic partial-volume steps.
struct PhantomSpec {
  PhantomPreset preset = PhantomPreset::shell;

  // geometry (mm); the hemispherical shell is the curved-cortex stand-in
  double shell_outer_radius = 7.0;
  double shell_wall = 1.2;
  double slab_thickness = 4.0;
  double ball_radius = 5.0;

  Index3 t2_dims{48, 48, 8};
  Vec3 t2_spacing{0.4, 0.4, 2.6};
  Vec3 t1_spacing{0.5, 0.5, 1.0};

  std::map<std::int32_t, double> t1_intensity, t2_intensity;  // label -> mean
  double noise_sigma = 0.01;
  int supersample = 4;
  std::uint64_t seed = 0;

  static PhantomSpec defaults(PhantomPreset preset);
  GridGeometry t2_grid() const;
  LabelTable label_table() const;
  void validate() const;
};

struct PhantomOutput {
  Volume t1, t2;
  LabelVolume seg_aniso;  // majority label per T2 voxel
  std::map<std::int32_t, double> analytic_thickness_mm;
};

PhantomOutput generate(const PhantomSpec& spec);

/// Analytic labels point-sampled on an isotropic grid over the T2 patch box.
LabelVolume phantom_truth_at(const PhantomSpec& spec, double iso_spacing);

}  // namespace isovox
