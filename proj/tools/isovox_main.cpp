// isovox: fit multi-contrast implicit networks to anisotropic patch pairs,
// sample them on isotropic grids, and compute downstream thickness/statistics.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "isovox/labels.hpp"
#include "isovox/manifest.hpp"
#include "isovox/model.hpp"
#include "isovox/nifti.hpp"
#include "isovox/phantom.hpp"
#include "isovox/resample.hpp"
#include "isovox/simd/kernels.hpp"
#include "isovox/stats.hpp"
#include "isovox/thickness.hpp"
#include "isovox/train.hpp"

namespace fs = std::filesystem;
using namespace isovox;

namespace {

// All outputs go to temp files first and are renamed on success, so a failed
// run never leaves partial outputs behind.
class OutputGuard {
public:
  std::string stage(const std::string& final_path) {
    const std::string tmp = final_path + ".tmp";
    pending_.emplace_back(tmp, final_path);
    return tmp;
  }
  void commit() {
    for (auto& [tmp, final_path] : pending_) {
      if (fs::exists(tmp)) fs::rename(tmp, final_path);
    }
    pending_.clear();
  }
  ~OutputGuard() {
    std::error_code ec;
    for (auto& [tmp, final_path] : pending_) fs::remove(tmp, ec);
  }

private:
  std::vector<std::pair<std::string, std::string>> pending_;
};

nlohmann::json load_config_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  require(in.good(), "io-open", "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("bad-json", std::string("config: ") + e.what());
  }
  require(j.is_object(), "bad-json", "config must be a JSON object");
  return j;
}

// JSON config fills in options the command line left at their defaults.
template <typename T>
void cfg(CLI::App* cmd, const std::string& flag, const nlohmann::json& j,
         const std::string& key, T& target) {
  if (!j.contains(key)) return;
  auto* opt = cmd->get_option_no_throw("--" + flag);
  if (opt != nullptr && opt->count() > 0) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail("bad-json", "config key '" + key + "': " + e.what());
  }
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct GlobalOpts {
  std::string config_path;
  std::string kernels = "auto";
  int threads = 0;
};

void apply_global(const GlobalOpts& g) {
  simd::set_variant(simd::parse_variant(g.kernels));
  if (g.threads > 0) simd::set_threads(g.threads);
}

std::vector<std::int32_t> non_background_ids(const LabelTable& t) {
  std::vector<std::int32_t> ids;
  for (const auto& [id, _] : t.entries)
    if (id != 0) ids.push_back(id);
  return ids;
}

int run_phantom_gen(const std::string& preset_name_str, const std::string& out_dir,
                    std::uint64_t seed, double noise, double iso_spacing,
                    const nlohmann::json& jcfg, CLI::App* cmd) {
  const auto t0 = std::chrono::steady_clock::now();
  PhantomSpec spec = PhantomSpec::defaults(parse_preset(preset_name_str));
  spec.seed = seed;
  spec.noise_sigma = noise;
  cfg(cmd, "noise", jcfg, "noise", spec.noise_sigma);
  cfg(cmd, "iso-spacing", jcfg, "iso_spacing", iso_spacing);
  fs::create_directories(out_dir);

  const PhantomOutput out = generate(spec);
  const LabelVolume truth = phantom_truth_at(spec, iso_spacing);

  OutputGuard guard;
  write_nifti(out.t1, guard.stage(out_dir + "/t1.nii"));
  write_nifti(out.t2, guard.stage(out_dir + "/t2.nii"));
  write_nifti(out.seg_aniso, guard.stage(out_dir + "/seg.nii"));
  write_nifti(truth, guard.stage(out_dir + "/seg_truth.nii"));
  write_label_table(out.seg_aniso.table, guard.stage(out_dir + "/labels.json"));

  nlohmann::json pj;
  pj["preset"] = preset_name_str;
  pj["seed"] = spec.seed;
  pj["noise_sigma"] = spec.noise_sigma;
  pj["supersample"] = spec.supersample;
  pj["t2_dims"] = {spec.t2_dims[0], spec.t2_dims[1], spec.t2_dims[2]};
  pj["t2_spacing"] = {spec.t2_spacing[0], spec.t2_spacing[1], spec.t2_spacing[2]};
  pj["t1_spacing"] = {spec.t1_spacing[0], spec.t1_spacing[1], spec.t1_spacing[2]};
  pj["iso_spacing"] = iso_spacing;
  pj["geometry"] = {{"shell_outer_radius", spec.shell_outer_radius},
                    {"shell_wall", spec.shell_wall},
                    {"slab_thickness", spec.slab_thickness},
                    {"ball_radius", spec.ball_radius}};
  auto th = nlohmann::json::object();
  for (const auto& [id, mm] : out.analytic_thickness_mm) th[std::to_string(id)] = mm;
  pj["analytic_thickness_mm"] = th;
  {
    std::ofstream pf(guard.stage(out_dir + "/phantom.json"));
    require(pf.good(), "io-open", "cannot write phantom manifest");
    pf << pj.dump(2) << "\n";
  }
  guard.commit();

  RunManifest m;
  m.subcommand = "phantom gen";
  m.config = pj;
  m.seed = seed;
  m.outputs = {out_dir + "/t1.nii", out_dir + "/t2.nii", out_dir + "/seg.nii",
               out_dir + "/seg_truth.nii", out_dir + "/labels.json",
               out_dir + "/phantom.json"};
  m.duration_seconds = elapsed_s(t0);
  m.write(out_dir + "/phantom");
  return 0;
}

int run_fit(const std::string& t1_path, const std::string& t2_path,
            const std::string& seg_path, const std::string& labels_path,
            const std::string& out_path, std::string loss_csv, TrainConfig& tc,
            double fill, bool quiet) {
  const auto t0 = std::chrono::steady_clock::now();
  const LabelTable table = read_label_table(labels_path);
  const Volume t1_raw = read_nifti_volume(t1_path);
  const Volume t2 = read_nifti_volume(t2_path);
  const LabelVolume seg = read_nifti_labels(seg_path, table);
  const Volume t1 = harmonize_bbox(t1_raw, t2.geom, static_cast<float>(fill));
  const TrainingDomain domain = build_domain(t1, t2, seg);

  const FitResult res = fit(domain, tc, quiet ? nullptr : &std::cerr);

  if (loss_csv.empty()) loss_csv = out_path + ".loss.csv";
  OutputGuard guard;
  save_model(res.model, guard.stage(out_path));
  write_loss_trace_csv(res.trace, guard.stage(loss_csv));
  guard.commit();

  RunManifest m;
  m.subcommand = "fit";
  m.config = {{"epochs", tc.epochs},     {"batch", tc.batch_size},
              {"lr", tc.lr},             {"sigma_b", tc.sigma_b},
              {"dropout", tc.dropout_p}, {"seed", tc.seed},
              {"fourier_rows", tc.fourier_rows}, {"width", tc.trunk_width},
              {"fill", fill},            {"kernels", simd::variant_name(simd::active_variant())}};
  m.add_input(t1_path);
  m.add_input(t2_path);
  m.add_input(seg_path);
  m.add_input(labels_path);
  m.outputs = {out_path, loss_csv};
  m.seed = tc.seed;
  m.duration_seconds = elapsed_s(t0);
  m.write(out_path);
  return 0;
}

int run_upsample(const std::string& model_path, double spacing,
                 const std::string& out_seg, const std::string& out_t1,
                 const std::string& out_t2, const std::string& images_mode,
                 const std::string& t1_src, const std::string& t2_src,
                 const std::string& bbox_from) {
  const auto t0 = std::chrono::steady_clock::now();
  const InrModel<float> model = load_model(model_path);
  require(images_mode == "linear" || images_mode == "inr", "bad-arg",
          "--images must be 'linear' or 'inr'");

  GridGeometry grid;
  if (!bbox_from.empty()) {
    const Volume ref = read_nifti_volume(bbox_from);
    grid = IsoGridSpec::from_grid_edges(ref.geom, spacing).build_grid();
  } else {
    grid = IsoGridSpec::from_grid_edges(model.t2_geom, spacing).build_grid();
  }

  const bool want_imgs = !out_t1.empty() || !out_t2.empty();
  OutputGuard guard;
  RunManifest m;
  m.subcommand = "upsample";
  m.add_input(model_path);

  if (want_imgs && images_mode == "linear") {
    require(!t1_src.empty() && !t2_src.empty(), "bad-arg",
            "--images linear needs --t1 and --t2 source volumes");
    const Volume t1 = read_nifti_volume(t1_src);
    const Volume t2 = read_nifti_volume(t2_src);
    m.add_input(t1_src);
    m.add_input(t2_src);
    const AtlasVolumes atlas = assemble_atlas(model, t1, t2, grid);
    write_nifti(atlas.seg, guard.stage(out_seg));
    if (!out_t1.empty()) write_nifti(atlas.t1, guard.stage(out_t1));
    if (!out_t2.empty()) write_nifti(atlas.t2, guard.stage(out_t2));
  } else {
    const SampledVolumes s = sample_inr(model, grid, true, want_imgs && !out_t1.empty(),
                                        want_imgs && !out_t2.empty());
    write_nifti(*s.seg, guard.stage(out_seg));
    if (!out_t1.empty()) write_nifti(*s.t1, guard.stage(out_t1));
    if (!out_t2.empty()) write_nifti(*s.t2, guard.stage(out_t2));
  }
  guard.commit();

  m.config = {{"spacing", spacing},
              {"images", images_mode},
              {"bbox_from", bbox_from},
              {"kernels", simd::variant_name(simd::active_variant())}};
  m.outputs.push_back(out_seg);
  if (!out_t1.empty()) m.outputs.push_back(out_t1);
  if (!out_t2.empty()) m.outputs.push_back(out_t2);
  m.seed = model.seed;
  m.duration_seconds = elapsed_s(t0);
  m.write(out_seg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-contrast INR super-resolution toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GlobalOpts gopts;
  app.add_option("--config", gopts.config_path, "JSON config; command-line flags win");
  app.add_option("--kernels", gopts.kernels, "scalar|avx2|avx512|auto");
  app.add_option("--threads", gopts.threads, "worker threads for dense math");

  // phantom gen
  auto* phantom_cmd = app.add_subcommand("phantom", "synthetic phantom utilities");
  auto* gen = phantom_cmd->add_subcommand("gen", "generate a phantom patch pair");
  std::string gen_preset = "shell", gen_out;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.01, gen_iso = 0.4;
  gen->add_option("--preset", gen_preset, "shell|slab|ball|constant");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--noise", gen_noise, "intensity noise sigma");
  gen->add_option("--iso-spacing", gen_iso, "spacing of the emitted truth labels (mm)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit an INR to a patch pair + segmentation");
  std::string fit_t1, fit_t2, fit_seg, fit_labels, fit_out, fit_loss_csv;
  TrainConfig tc;
  double fit_fill = 0.0;
  bool fit_quiet = false;
  fit_cmd->add_option("--t1", fit_t1)->required();
  fit_cmd->add_option("--t2", fit_t2)->required();
  fit_cmd->add_option("--seg", fit_seg)->required();
  fit_cmd->add_option("--labels", fit_labels, "label table JSON")->required();
  fit_cmd->add_option("--out", fit_out, "output INRM model path")->required();
  fit_cmd->add_option("--epochs", tc.epochs);
  fit_cmd->add_option("--batch", tc.batch_size);
  fit_cmd->add_option("--lr", tc.lr);
  fit_cmd->add_option("--sigma-b", tc.sigma_b);
  fit_cmd->add_option("--dropout", tc.dropout_p);
  fit_cmd->add_option("--seed", tc.seed);
  fit_cmd->add_option("--fourier-rows", tc.fourier_rows);
  fit_cmd->add_option("--width", tc.trunk_width);
  fit_cmd->add_option("--fill", fit_fill, "padding fill value for harmonization");
  fit_cmd->add_option("--loss-csv", fit_loss_csv, "loss trace path (default <out>.loss.csv)");
  fit_cmd->add_flag("--quiet", fit_quiet, "suppress epoch logs");

  // upsample
  auto* up = app.add_subcommand("upsample", "sample a trained model on an isotropic grid");
  std::string up_model, up_out_seg, up_out_t1, up_out_t2, up_images = "linear";
  std::string up_t1_src, up_t2_src, up_bbox_from;
  double up_spacing = 0.4;
  up->add_option("--model", up_model)->required();
  up->add_option("--spacing", up_spacing, "isotropic spacing (mm)");
  up->add_option("--out-seg", up_out_seg)->required();
  up->add_option("--out-t1", up_out_t1);
  up->add_option("--out-t2", up_out_t2);
  up->add_option("--images", up_images, "linear|inr intensity resampling");
  up->add_option("--t1", up_t1_src, "T1 source volume for --images linear");
  up->add_option("--t2", up_t2_src, "T2 source volume for --images linear");
  up->add_option("--bbox-from", up_bbox_from, "take the grid box from this volume");

  // downsample-labels
  auto* down = app.add_subcommand("downsample-labels",
                                  "majority-vote labels onto a reference grid");
  std::string down_in, down_labels, down_ref, down_out;
  down->add_option("--in", down_in)->required();
  down->add_option("--labels", down_labels, "label table JSON")->required();
  down->add_option("--ref", down_ref, "volume providing the target grid")->required();
  down->add_option("--out", down_out)->required();

  // thickness
  auto* th = app.add_subcommand("thickness", "skeleton-based per-label thickness");
  std::string th_seg, th_labels, th_out, th_map;
  double th_prune = 0.25;
  int th_jobs = 1;
  th->add_option("--seg", th_seg)->required();
  th->add_option("--labels", th_labels, "label table JSON")->required();
  th->add_option("--out", th_out, "output CSV")->required();
  th->add_option("--prune", th_prune, "skeleton prune ratio in [0,1)");
  th->add_option("--map", th_map, "optional per-voxel thickness NIfTI");
  th->add_option("--jobs", th_jobs, "parallel per-label workers");

  // dice
  auto* dice_cmd = app.add_subcommand("dice", "per-label Dice between two segmentations");
  std::string dice_a, dice_b, dice_labels, dice_out;
  dice_cmd->add_option("--a", dice_a)->required();
  dice_cmd->add_option("--b", dice_b)->required();
  dice_cmd->add_option("--labels", dice_labels, "label table JSON")->required();
  dice_cmd->add_option("--out", dice_out, "output CSV")->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "cohort statistics");
  auto* grp = stats_cmd->add_subcommand("group", "GLM group test + AUC per region");
  std::string grp_table, grp_out;
  grp->add_option("--table", grp_table)->required();
  grp->add_option("--out", grp_out)->required();
  auto* lon = stats_cmd->add_subcommand("longitudinal", "annualized stability per region");
  std::string lon_table, lon_out;
  lon->add_option("--table", lon_table)->required();
  lon->add_option("--out", lon_out)->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "ERROR usage: " << e.what() << "\n";
      return 2;
    }

    const nlohmann::json jcfg = load_config_json(gopts.config_path);
    cfg(&app, "kernels", jcfg, "kernels", gopts.kernels);
    cfg(&app, "threads", jcfg, "threads", gopts.threads);
    apply_global(gopts);

    if (gen->parsed()) {
      cfg(gen, "preset", jcfg, "preset", gen_preset);
      cfg(gen, "seed", jcfg, "seed", gen_seed);
      return run_phantom_gen(gen_preset, gen_out, gen_seed, gen_noise, gen_iso, jcfg, gen);
    }
    if (fit_cmd->parsed()) {
      cfg(fit_cmd, "epochs", jcfg, "epochs", tc.epochs);
      cfg(fit_cmd, "batch", jcfg, "batch", tc.batch_size);
      cfg(fit_cmd, "lr", jcfg, "lr", tc.lr);
      cfg(fit_cmd, "sigma-b", jcfg, "sigma_b", tc.sigma_b);
      cfg(fit_cmd, "dropout", jcfg, "dropout", tc.dropout_p);
      cfg(fit_cmd, "seed", jcfg, "seed", tc.seed);
      cfg(fit_cmd, "fourier-rows", jcfg, "fourier_rows", tc.fourier_rows);
      cfg(fit_cmd, "width", jcfg, "width", tc.trunk_width);
      cfg(fit_cmd, "fill", jcfg, "fill", fit_fill);
      return run_fit(fit_t1, fit_t2, fit_seg, fit_labels, fit_out, fit_loss_csv, tc,
                     fit_fill, fit_quiet);
    }
    if (up->parsed()) {
      cfg(up, "spacing", jcfg, "spacing", up_spacing);
      cfg(up, "images", jcfg, "images", up_images);
      return run_upsample(up_model, up_spacing, up_out_seg, up_out_t1, up_out_t2,
                          up_images, up_t1_src, up_t2_src, up_bbox_from);
    }
    if (down->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const LabelTable table = read_label_table(down_labels);
      const LabelVolume fine = read_nifti_labels(down_in, table);
      const Volume ref = read_nifti_volume(down_ref);
      const LabelVolume out = downsample_labels(fine, ref.geom);
      OutputGuard guard;
      write_nifti(out, guard.stage(down_out));
      guard.commit();
      RunManifest m;
      m.subcommand = "downsample-labels";
      m.add_input(down_in);
      m.add_input(down_labels);
      m.add_input(down_ref);
      m.outputs = {down_out};
      m.duration_seconds = elapsed_s(t0);
      m.write(down_out);
      return 0;
    }
    if (th->parsed()) {
      cfg(th, "prune", jcfg, "prune", th_prune);
      cfg(th, "jobs", jcfg, "jobs", th_jobs);
      const auto t0 = std::chrono::steady_clock::now();
      const LabelTable table = read_label_table(th_labels);
      const LabelVolume seg = read_nifti_labels(th_seg, table);
      const ThicknessResult res = thickness_map(seg, non_background_ids(table), th_prune,
                                                !th_map.empty(), th_jobs);
      OutputGuard guard;
      write_thickness_csv(res, guard.stage(th_out));
      if (!th_map.empty()) write_nifti(*res.map, guard.stage(th_map));
      guard.commit();
      RunManifest m;
      m.subcommand = "thickness";
      m.config = {{"prune", th_prune}, {"jobs", th_jobs}};
      m.add_input(th_seg);
      m.add_input(th_labels);
      m.outputs = {th_out};
      if (!th_map.empty()) m.outputs.push_back(th_map);
      m.duration_seconds = elapsed_s(t0);
      m.write(th_out);
      return 0;
    }
    if (dice_cmd->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const LabelTable table = read_label_table(dice_labels);
      const LabelVolume a = read_nifti_labels(dice_a, table);
      const LabelVolume b = read_nifti_labels(dice_b, table);
      OutputGuard guard;
      {
        std::ofstream out(guard.stage(dice_out));
        require(out.good(), "io-open", "cannot write '" + dice_out + "'");
        out << "label_id,label_name,dice\n";
        out.precision(12);
        for (const auto& [id, name] : table.entries)
          out << id << ',' << name << ',' << dice(a, b, id) << "\n";
      }
      guard.commit();
      RunManifest m;
      m.subcommand = "dice";
      m.add_input(dice_a);
      m.add_input(dice_b);
      m.add_input(dice_labels);
      m.outputs = {dice_out};
      m.duration_seconds = elapsed_s(t0);
      m.write(dice_out);
      return 0;
    }
    if (grp->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const CohortTable table = read_cohort_csv(grp_table);
      OutputGuard guard;
      write_group_stats_csv(table, guard.stage(grp_out));
      guard.commit();
      RunManifest m;
      m.subcommand = "stats group";
      m.add_input(grp_table);
      m.outputs = {grp_out};
      m.duration_seconds = elapsed_s(t0);
      m.write(grp_out);
      return 0;
    }
    if (lon->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const PairTable table = read_pair_csv(lon_table);
      OutputGuard guard;
      write_longitudinal_csv(table, guard.stage(lon_out));
      guard.commit();
      RunManifest m;
      m.subcommand = "stats longitudinal";
      m.add_input(lon_table);
      m.outputs = {lon_out};
      m.duration_seconds = elapsed_s(t0);
      m.write(lon_out);
      return 0;
    }
    std::cerr << "ERROR usage: no subcommand given\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "ERROR " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << e.what() << "\n";
    return 1;
  }
}
