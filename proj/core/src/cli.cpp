#include "gsvr/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gsvr/config.hpp"
#include "gsvr/formats.hpp"
#include "gsvr/metrics.hpp"
#include "gsvr/optimizer.hpp"
#include "gsvr/phantom.hpp"

namespace gsvr {

namespace {

namespace fs = std::filesystem;

SimConfig sim_config_for_preset(const std::string& preset) {
  if (preset == "desk" || preset.empty()) return desk_sim_config();
  if (preset == "paper") return paper_sim_config();
  if (preset == "tiny") return tiny_sim_config();
  throw ValidationError("unknown preset: " + preset);
}

ReconConfig recon_config_for_preset(const std::string& preset) {
  if (preset == "desk" || preset.empty()) return desk_recon_config();
  if (preset == "paper") return paper_recon_config();
  if (preset == "tiny") return tiny_recon_config();
  throw ValidationError("unknown preset: " + preset);
}

int cmd_simulate(const std::string& preset, const std::string& config_path,
                 std::int64_t seed_override, const std::string& out_dir) {
  SimConfig cfg = sim_config_for_preset(preset);
  if (!config_path.empty()) cfg = load_sim_config(config_path, cfg);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();

  const fs::path dir(out_dir);
  fs::create_directories(dir);

  const Phantom phantom = make_phantom(cfg.phantom_kind, cfg.phantom, cfg.phantom_spacing_mm,
                                       cfg.phantom_dims, mix_seed(cfg.seed, 0x9a17));
  CaseBundle bundle =
      make_benchmark_case(phantom, cfg.protocol, cfg.amplitude, cfg.motion_model, cfg.seed);

  write_stack(dir / "stacks.gstk", bundle.stacks, "truth_transforms.txt");
  write_volume(dir / "truth.gvol", bundle.truth_volume);
  write_sidecar(dir / "truth_transforms.txt", sidecar_from_stacks(bundle.stacks, true));
  if (phantom.exact_set)
    write_gaussians(dir / "truth_set.ggau", *phantom.exact_set, 1.0);

  CaseManifest manifest;
  manifest.case_id = cfg.case_id + "-" + std::to_string(cfg.seed);
  manifest.seed = cfg.seed;
  manifest.stacks_file = "stacks.gstk";
  manifest.truth_volume_file = "truth.gvol";
  manifest.truth_transforms_file = "truth_transforms.txt";
  if (phantom.exact_set) manifest.truth_gaussians_file = "truth_set.ggau";
  {
    std::istringstream in(serialize_sim_config(cfg));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      if (key == "seed" || key == "case_id") continue;
      manifest.params["sim." + key] = line.substr(eq + 3);
    }
  }
  write_manifest(dir / "manifest.txt", manifest);
  std::cout << "case " << manifest.case_id << " written to " << dir.string() << "\n";
  return 0;
}

SliceStack load_case_stacks(const std::string& case_path, const std::string& stacks_path,
                            fs::path* case_dir) {
  if (!case_path.empty()) {
    const fs::path manifest_path(case_path);
    const CaseManifest manifest = read_manifest(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    if (case_dir) *case_dir = dir;
    SliceStack stacks = read_stack(dir / manifest.stacks_file);
    return stacks;
  }
  if (stacks_path.empty()) throw ValidationError("reconstruct requires --case or --stacks");
  if (case_dir) *case_dir = fs::path(stacks_path).parent_path();
  return read_stack(stacks_path);
}

int cmd_reconstruct(const std::string& case_path, const std::string& stacks_path,
                    const std::string& preset, const std::string& config_path,
                    std::int64_t seed_override, const std::string& out_dir,
                    const std::string& init_transforms) {
  ReconConfig cfg = recon_config_for_preset(preset);
  if (!config_path.empty()) cfg = load_recon_config(config_path, cfg);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();

  fs::path case_dir;
  SliceStack stacks = load_case_stacks(case_path, stacks_path, &case_dir);
  if (!init_transforms.empty()) {
    apply_sidecar(stacks, read_sidecar(init_transforms));
    if (cfg.transform_init == TransformInit::nominal) cfg.transform_init = TransformInit::as_loaded;
  }
  if (cfg.transform_init == TransformInit::oracle_perturbed && !case_path.empty()) {
    const CaseManifest manifest = read_manifest(case_path);
    const auto truth = read_sidecar(case_dir / manifest.truth_transforms_file);
    for (Stack& st : stacks.stacks) st.truth_motion.assign(st.num_slices(), RigidTransform::identity());
    for (const SidecarEntry& e : truth)
      for (Stack& st : stacks.stacks)
        if (st.id == e.stack_id && e.slice_index < st.num_slices())
          st.truth_motion[e.slice_index] = e.transform;
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::ostringstream log_stream;
  ReconResult result = reconstruct(stacks, cfg, &log_stream, dir / "checkpoints");

  write_gaussians(dir / "recon.ggau", result.set, result.intensity_scale);
  std::vector<SidecarEntry> entries;
  for (std::size_t s = 0; s < result.motion.size(); ++s)
    for (std::size_t k = 0; k < result.motion[s].size(); ++k)
      entries.push_back({stacks.stacks[s].id, static_cast<int>(k), result.motion[s][k]});
  write_sidecar(dir / "transforms.txt", entries);

  // rasterized export on the reconstruction lattice, in acquired units
  {
    FieldCache cache;
    cache.rebuild(result.set);
    double max_r = 1.0;
    for (std::size_t j = 0; j < result.set.size(); ++j)
      max_r = std::max(max_r, result.set.support_radius(j));
    Eigen::AlignedBox3d bounds(result.recon_grid.origin - Vec3::Constant(max_r),
                               result.recon_grid.origin +
                                   result.recon_grid.spacing.cwiseProduct(
                                       result.recon_grid.dims.cast<double>()) +
                                   Vec3::Constant(max_r));
    SpatialIndex index = build_index(result.set, bounds, default_cell_size(result.set));
    VoxelVolume vol = rasterize_to_grid(result.set, index, result.recon_grid);
    vol.intensity_scale = result.intensity_scale;
    write_volume(dir / "recon.gvol", vol);
  }
  atomic_write(dir / "run_log.txt", log_stream.str());
  std::cout << "reconstruction written to " << dir.string() << " (iterations "
            << result.iterations_run << ")\n";
  return 0;
}

int cmd_evaluate(const std::string& case_path, const std::string& recon_path,
                 const std::string& transforms_path, const std::string& out_path) {
  const fs::path manifest_path(case_path);
  const CaseManifest manifest = read_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  const VoxelVolume truth = read_volume(dir / manifest.truth_volume_file);

  double intensity_scale = 1.0;
  const GaussianSet set = read_gaussians(recon_path, &intensity_scale);

  // rasterize the field onto the truth lattice, undoing normalization
  FieldCache cache;
  cache.rebuild(set);
  double max_r = 1.0;
  for (std::size_t j = 0; j < set.size(); ++j) max_r = std::max(max_r, set.support_radius(j));
  Eigen::AlignedBox3d bounds(
      truth.grid.origin - Vec3::Constant(max_r),
      truth.grid.origin + truth.grid.spacing.cwiseProduct(truth.grid.dims.cast<double>()) +
          Vec3::Constant(max_r));
  SpatialIndex index = build_index(set, bounds, default_cell_size(set));
  VoxelVolume recon = rasterize_to_grid(set, index, truth.grid);
  for (float& v : recon.data) v = static_cast<float>(v * intensity_scale);

  const auto mask = support_mask(truth, 2);
  const double peak = 1.0;

  std::ostringstream out;
  out << "# gsvr metrics report\n";
  out << "case_id = " << manifest.case_id << "\n";
  out << "psnr_raw = " << psnr(truth, recon, peak, &mask) << "\n";
  out << "ssim_raw = " << ssim3d(truth, recon) << "\n";
  out << "nrmse_raw = " << nrmse(truth, recon, &mask) << "\n";

  const RigidTransform g = register_rigid(truth, recon);
  const VoxelVolume aligned = resample_rigid(recon, g, truth.grid);
  out << "psnr_registered = " << psnr(truth, aligned, peak, &mask) << "\n";
  out << "ssim_registered = " << ssim3d(truth, aligned) << "\n";
  out << "nrmse_registered = " << nrmse(truth, aligned, &mask) << "\n";

  if (!transforms_path.empty()) {
    const auto truth_entries = read_sidecar(dir / manifest.truth_transforms_file);
    const auto est_entries = read_sidecar(transforms_path);
    SliceStack stacks = read_stack(dir / manifest.stacks_file);
    SliceStack est_stacks = stacks;
    apply_sidecar(stacks, truth_entries);
    apply_sidecar(est_stacks, est_entries);
    std::vector<RigidTransform> truth_poses, est_poses;
    for (std::size_t s = 0; s < stacks.stacks.size(); ++s)
      for (int k = 0; k < stacks.stacks[s].num_slices(); ++k) {
        truth_poses.push_back(
            effective_pose(stacks.stacks[s].slice_geometry(k), stacks.stacks[s].motion[k]));
        est_poses.push_back(effective_pose(est_stacks.stacks[s].slice_geometry(k),
                                           est_stacks.stacks[s].motion[k]));
      }
    const MotionReport rep = motion_report(truth_poses, est_poses);
    out << "motion.rot_median_deg = " << rep.rot_median_deg << "\n";
    out << "motion.rot_mean_deg = " << rep.rot_mean_deg << "\n";
    out << "motion.rot_max_deg = " << rep.rot_max_deg << "\n";
    out << "motion.trans_median_mm = " << rep.trans_median_mm << "\n";
    out << "motion.trans_mean_mm = " << rep.trans_mean_mm << "\n";
    out << "motion.trans_max_mm = " << rep.trans_max_mm << "\n";
  }
  atomic_write(out_path, out.str());
  std::cout << out.str();
  return 0;
}

int cmd_export_slices(const std::string& volume_path, const std::string& gaussians_path,
                      const std::string& out_dir, int raster_dim) {
  VoxelVolume vol;
  if (!volume_path.empty()) {
    vol = read_volume(volume_path);
  } else if (!gaussians_path.empty()) {
    double scale = 1.0;
    const GaussianSet set = read_gaussians(gaussians_path, &scale);
    if (set.size() == 0) throw ValidationError("export-slices: empty gaussian set");
    Eigen::AlignedBox3d box;
    for (std::size_t j = 0; j < set.size(); ++j) {
      box.extend(set.centers[j] + Vec3::Constant(set.support_radius(j)));
      box.extend(set.centers[j] - Vec3::Constant(set.support_radius(j)));
    }
    GridSpec grid;
    grid.dims = Eigen::Vector3i::Constant(raster_dim);
    grid.spacing = (box.max() - box.min()) / static_cast<double>(raster_dim);
    grid.origin = box.min() + 0.5 * grid.spacing;
    SpatialIndex index = build_index(set, box, default_cell_size(set));
    vol = rasterize_to_grid(set, index, grid);
    for (float& v : vol.data) v = static_cast<float>(v * scale);
  } else {
    throw ValidationError("export-slices requires --volume or --gaussians");
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto& dims = vol.grid.dims;
  float peak = 0.0f;
  for (float v : vol.data) peak = std::max(peak, v);
  if (peak <= 0.0f) peak = 1.0f;

  Image2D axial(dims.y(), dims.x());
  const int zc = dims.z() / 2;
  for (int y = 0; y < dims.y(); ++y)
    for (int x = 0; x < dims.x(); ++x) axial.at(y, x) = vol.at(x, y, zc);
  write_pgm(dir / "axial.pgm", axial, peak);

  Image2D coronal(dims.z(), dims.x());
  const int yc = dims.y() / 2;
  for (int z = 0; z < dims.z(); ++z)
    for (int x = 0; x < dims.x(); ++x) coronal.at(z, x) = vol.at(x, yc, z);
  write_pgm(dir / "coronal.pgm", coronal, peak);

  Image2D sagittal(dims.z(), dims.y());
  const int xc = dims.x() / 2;
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y) sagittal.at(z, y) = vol.at(xc, y, z);
  write_pgm(dir / "sagittal.pgm", sagittal, peak);

  std::cout << "cross-sections written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"gsvr: slice-to-volume reconstruction with gaussian volume representations"};
  app.require_subcommand(1);

  std::string preset, config_path, out_dir = ".", case_path, stacks_path;
  std::string recon_path, transforms_path, report_path = "metrics.txt";
  std::string volume_path, gaussians_path, init_transforms;
  std::int64_t seed = -1;
  int threads = 0;
  int raster_dim = 64;

  app.add_option("--threads", threads, "worker thread count (0 = hardware)");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic case bundle");
  sim->add_option("--preset", preset, "desk | paper | tiny");
  sim->add_option("--config", config_path, "simulation config file");
  sim->add_option("--seed", seed, "seed override");
  sim->add_option("--out-dir", out_dir, "output directory")->required();

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a volume from slice stacks");
  rec->add_option("--case", case_path, "case manifest file");
  rec->add_option("--stacks", stacks_path, "GSTK stack file (alternative to --case)");
  rec->add_option("--preset", preset, "desk | paper | tiny");
  rec->add_option("--config", config_path, "reconstruction config file");
  rec->add_option("--seed", seed, "seed override");
  rec->add_option("--init-transforms", init_transforms, "sidecar with initial motion states");
  rec->add_option("--out-dir", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "compare a reconstruction against ground truth");
  ev->add_option("--case", case_path, "case manifest file")->required();
  ev->add_option("--recon", recon_path, "reconstructed GGAU file")->required();
  ev->add_option("--transforms", transforms_path, "recovered transform sidecar");
  ev->add_option("--out", report_path, "metrics report path");

  auto* ex = app.add_subcommand("export-slices", "render orthogonal cross-sections to PGM");
  ex->add_option("--volume", volume_path, "GVOL volume");
  ex->add_option("--gaussians", gaussians_path, "GGAU gaussian set");
  ex->add_option("--raster-dim", raster_dim, "raster resolution for gaussian input");
  ex->add_option("--out-dir", out_dir, "output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << "\n";
      return 0;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::usage);
  }

  try {
    ThreadPool::instance().set_thread_count(threads);
    if (sim->parsed()) return cmd_simulate(preset, config_path, seed, out_dir);
    if (rec->parsed())
      return cmd_reconstruct(case_path, stacks_path, preset, config_path, seed, out_dir,
                             init_transforms);
    if (ev->parsed()) return cmd_evaluate(case_path, recon_path, transforms_path, report_path);
    if (ex->parsed()) return cmd_export_slices(volume_path, gaussians_path, out_dir, raster_dim);
    std::cerr << "no subcommand given\n";
    return static_cast<int>(ExitCode::usage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  }
}

}  // namespace gsvr
