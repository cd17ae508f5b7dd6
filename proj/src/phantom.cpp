#include "isovox/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "isovox/resample.hpp"
#include "isovox/rng.hpp"

namespace isovox {

PhantomPreset parse_preset(const std::string& name) {
  if (name == "shell") return PhantomPreset::shell;
  if (name == "slab") return PhantomPreset::slab;
  if (name == "ball") return PhantomPreset::ball;
  if (name == "constant") return PhantomPreset::constant;
  fail("bad-preset", "unknown phantom preset '" + name + "'");
}

const char* preset_name(PhantomPreset p) {
  switch (p) {
    case PhantomPreset::shell: return "shell";
    case PhantomPreset::slab: return "slab";
    case PhantomPreset::ball: return "ball";
    case PhantomPreset::constant: return "constant";
  }
  return "?";
}

PhantomSpec PhantomSpec::defaults(PhantomPreset p) {
  PhantomSpec s;
  s.preset = p;
  s.t1_intensity = {{0, 0.15}, {1, 0.85}};
  s.t2_intensity = {{0, 0.20}, {1, 0.90}};
  if (p == PhantomPreset::shell) {
    s.t1_intensity[2] = 0.45;
    s.t2_intensity[2] = 0.55;
  }
  return s;
}

GridGeometry PhantomSpec::t2_grid() const {
  GridGeometry g;
  g.dims = t2_dims;
  g.spacing = t2_spacing;
  g.origin = {0, 0, 0};
  g.quantize_to_file_precision();
  return g;
}

LabelTable PhantomSpec::label_table() const {
  LabelTable t;
  switch (preset) {
    case PhantomPreset::shell:
      t.entries = {{0, "background"}, {1, "shell"}, {2, "core"}};
      break;
    case PhantomPreset::slab:
      t.entries = {{0, "background"}, {1, "slab"}};
      break;
    case PhantomPreset::ball:
      t.entries = {{0, "background"}, {1, "ball"}};
      break;
    case PhantomPreset::constant:
      t.entries = {{0, "background"}, {1, "tissue"}};
      break;
  }
  return t;
}

namespace {

struct Scene {
  const PhantomSpec& spec;
  Vec3 box_lo, box_hi;  // T2 voxel-edge box
  Vec3 center;          // scene center
  Vec3 shell_center;    // rim plane at shell_center[2], dome along +z

  explicit Scene(const PhantomSpec& s) : spec(s) {
    const GridGeometry g = s.t2_grid();
    Vec3 clo, chi;
    g.center_bounds(clo, chi);
    for (int a = 0; a < 3; ++a) {
      box_lo[a] = clo[a] - 0.5 * g.spacing[a];
      box_hi[a] = chi[a] + 0.5 * g.spacing[a];
      center[a] = 0.5 * (box_lo[a] + box_hi[a]);
    }
    shell_center = center;
    shell_center[2] = center[2] - 0.5 * s.shell_outer_radius;
  }

  std::int32_t label_at(const Vec3& p) const {
    switch (spec.preset) {
      case PhantomPreset::shell: {
        if (p[2] < shell_center[2]) return 0;
        const Vec3 rel = p - shell_center;
        const double r = std::sqrt(dot(rel, rel));
        const double r_in = spec.shell_outer_radius - spec.shell_wall;
        if (r <= r_in) return 2;
        if (r <= spec.shell_outer_radius) return 1;
        return 0;
      }
      case PhantomPreset::slab:
        return std::abs(p[2] - center[2]) <= 0.5 * spec.slab_thickness ? 1 : 0;
      case PhantomPreset::ball: {
        const Vec3 rel = p - center;
        return dot(rel, rel) <= spec.ball_radius * spec.ball_radius ? 1 : 0;
      }
      case PhantomPreset::constant:
        return 1;
    }
    return 0;
  }
};

}  // namespace

void PhantomSpec::validate() const {
  require(supersample >= 1, "bad-spec", "supersample factor must be >= 1");
  require(noise_sigma >= 0, "bad-spec", "noise sigma must be >= 0");
  const Scene scene(*this);
  const Vec3 &lo = scene.box_lo, &hi = scene.box_hi;
  auto inside = [&](double x, int a) { return x >= lo[a] && x <= hi[a]; };
  switch (preset) {
    case PhantomPreset::shell: {
      require(shell_wall > 0 && shell_wall < shell_outer_radius, "bad-spec",
              "shell wall must be in (0, outer radius)");
      for (int a = 0; a < 2; ++a)
        require(inside(scene.shell_center[a] - shell_outer_radius, a) &&
                    inside(scene.shell_center[a] + shell_outer_radius, a),
                "geometry-exceeds", "shell does not fit inside the patch box");
      require(inside(scene.shell_center[2], 2) &&
                  inside(scene.shell_center[2] + shell_outer_radius, 2),
              "geometry-exceeds", "shell dome does not fit inside the patch box");
      break;
    }
    case PhantomPreset::slab:
      require(slab_thickness > 0 && slab_thickness <= hi[2] - lo[2],
              "geometry-exceeds", "slab thicker than the patch box");
      break;
    case PhantomPreset::ball:
      for (int a = 0; a < 3; ++a)
        require(inside(scene.center[a] - ball_radius, a) &&
                    inside(scene.center[a] + ball_radius, a),
                "geometry-exceeds", "ball does not fit inside the patch box");
      break;
    case PhantomPreset::constant:
      break;
  }
  const LabelTable table = label_table();
  for (const auto& [ida, _] : table.entries) {
    require(t1_intensity.count(ida) && t2_intensity.count(ida), "bad-spec",
            "intensity map missing label " + std::to_string(ida));
    for (const auto& [idb, __] : table.entries) {
      if (ida >= idb) continue;
      require(std::abs(t1_intensity.at(ida) - t1_intensity.at(idb)) >= 5 * noise_sigma &&
                  std::abs(t2_intensity.at(ida) - t2_intensity.at(idb)) >= 5 * noise_sigma,
              "bad-spec", "label intensities must differ by at least 5 noise sigma");
    }
  }
}

namespace {

// Area-weighted intensity + majority label per voxel via supersampling.
void rasterize(const Scene& scene, const GridGeometry& g,
               const std::map<std::int32_t, double>& intensity, double sigma, Rng& noise,
               const LabelTable& table, std::vector<float>* values,
               std::vector<std::int32_t>* majority) {
  const int ss = scene.spec.supersample;
  const double inv = 1.0 / static_cast<double>(ss * ss * ss);
  std::vector<int> counts(table.size());
  i64 idx = 0;
  for (i64 k = 0; k < g.dims[2]; ++k)
    for (i64 j = 0; j < g.dims[1]; ++j)
      for (i64 i = 0; i < g.dims[0]; ++i, ++idx) {
        std::fill(counts.begin(), counts.end(), 0);
        double mean = 0;
        for (int sz = 0; sz < ss; ++sz)
          for (int sy = 0; sy < ss; ++sy)
            for (int sx = 0; sx < ss; ++sx) {
              const Vec3 sub = {
                  static_cast<double>(i) + (sx + 0.5) / ss - 0.5,
                  static_cast<double>(j) + (sy + 0.5) / ss - 0.5,
                  static_cast<double>(k) + (sz + 0.5) / ss - 0.5,
              };
              const std::int32_t lab = scene.label_at(g.voxel_to_physical(sub));
              counts[table.index_of(lab)] += 1;
              mean += intensity.at(lab);
            }
        if (values) {
          double v = mean * inv;
          if (sigma > 0) v += sigma * noise.gaussian();
          (*values)[idx] = static_cast<float>(v);
        }
        if (majority) {
          std::size_t best = 0;
          for (std::size_t c = 1; c < counts.size(); ++c)
            if (counts[c] > counts[best]) best = c;
          (*majority)[idx] = table.entries[best].first;
        }
      }
}

}  // namespace

PhantomOutput generate(const PhantomSpec& spec) {
  spec.validate();
  const Scene scene(spec);
  const LabelTable table = spec.label_table();

  PhantomOutput out;
  out.t2.geom = spec.t2_grid();
  out.t2.data.resize(out.t2.geom.voxel_count());
  out.seg_aniso.geom = out.t2.geom;
  out.seg_aniso.table = table;
  out.seg_aniso.data.resize(out.t2.geom.voxel_count());
  Rng t2_noise(mix64(spec.seed ^ mix64(0x7E57E2)));
  rasterize(scene, out.t2.geom, spec.t2_intensity, spec.noise_sigma, t2_noise, table,
            &out.t2.data, &out.seg_aniso.data);

  out.t1.geom = harmonize_target_grid(out.t2.geom, spec.t1_spacing);
  out.t1.data.resize(out.t1.geom.voxel_count());
  Rng t1_noise(mix64(spec.seed ^ mix64(0x7E57E1)));
  rasterize(scene, out.t1.geom, spec.t1_intensity, spec.noise_sigma, t1_noise, table,
            &out.t1.data, nullptr);

  switch (spec.preset) {
    case PhantomPreset::shell:
      out.analytic_thickness_mm[1] = spec.shell_wall;
      break;
    case PhantomPreset::slab:
      out.analytic_thickness_mm[1] = spec.slab_thickness;
      break;
    case PhantomPreset::ball:
      out.analytic_thickness_mm[1] = 2.0 * spec.ball_radius;
      break;
    case PhantomPreset::constant:
      break;
  }
  return out;
}

LabelVolume phantom_truth_at(const PhantomSpec& spec, double iso_spacing) {
  spec.validate();
  const Scene scene(spec);
  const GridGeometry grid =
      IsoGridSpec::from_grid_edges(spec.t2_grid(), iso_spacing).build_grid();
  LabelVolume out;
  out.geom = grid;
  out.table = spec.label_table();
  out.data.resize(grid.voxel_count());
  i64 idx = 0;
  for (i64 k = 0; k < grid.dims[2]; ++k)
    for (i64 j = 0; j < grid.dims[1]; ++j)
      for (i64 i = 0; i < grid.dims[0]; ++i, ++idx)
        out.data[idx] = scene.label_at(grid.voxel_to_physical(
            {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)}));
  return out;
}

}  // namespace isovox
