// Structured-text configuration: dotted key = value lines covering every
// reconstruction and simulation parameter. Unknown keys are errors; the
// effective (post-default) config serializes back to a parseable file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gsvr/objective.hpp"
#include "gsvr/phantom.hpp"

namespace gsvr {

enum class InitMode { grid_backproject, provided };
enum class TransformInit { nominal, as_loaded, oracle_perturbed };

struct StageSpec {
  int resolution_factor = 1;  // 2 = coarse (pixel-averaged slices), 1 = full
  int iterations = 0;
  std::size_t budget = 0;  // gaussian count target entering this stage
};

struct PsfSpec {
  Eigen::Vector3i samples = Eigen::Vector3i(1, 1, 5);
  double inplane_fwhm_factor = 1.2;
  double thickness_fwhm_factor = 1.0;
};

struct LrSpec {
  double mu_start = 2e-3;
  double mu_end = 2e-6;
  double intensity = 0.05;
  double scale = 0.005;
  double rotation = 0.001;
  double translation = 5e-4;
  double slice_rotation = 5e-5;
};

struct AdamSpec {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ReconConfig {
  std::uint64_t seed = 0;
  LossConfig loss;
  PsfSpec psf;
  LrSpec lr;
  AdamSpec adam;
  std::vector<StageSpec> stages;

  InitMode init_mode = InitMode::grid_backproject;
  std::string init_path;  // GGAU file for InitMode::provided via the CLI

  TransformInit transform_init = TransformInit::nominal;
  double oracle_noise_rot_deg = 0.0;   // oracle_perturbed only
  double oracle_noise_trans_mm = 0.0;

  double normalize_percentile = 99.5;  // maps this percentile to intensity 1
  double scale_min_mm = 0.05;
  double scale_max_mm = 60.0;
  double recon_spacing_mm = 0.0;  // 0 = min in-plane spacing of the stacks

  bool freeze_transforms = false;
  int divergence_retries = 3;
  int checkpoint_every = 1000;  // iterations; 0 disables periodic checkpoints
  int convergence_window = 100;
  double convergence_min_rel_improvement = 0.0;  // 0 disables early stop

  void validate() const;
};

ReconConfig default_recon_config();
// Stage schedule / budgets sized for the desk-scale protocol (1/8-linear
// replica); budgets follow the linear-in-voxel-count scaling rule.
ReconConfig desk_recon_config();
// Clinical-scale defaults (2000 + 4000 iterations, budgets 20k / 80k).
ReconConfig paper_recon_config();
// Small config for smoke tests.
ReconConfig tiny_recon_config();

struct SimConfig {
  std::uint64_t seed = 0;
  PhantomKind phantom_kind = PhantomKind::gaussian_mixture;
  PhantomParams phantom;
  Eigen::Vector3i phantom_dims = Eigen::Vector3i(64, 64, 64);
  double phantom_spacing_mm = 1.6;
  Protocol protocol = desk_protocol();
  MotionAmplitude amplitude;  // defaults to motion-free
  MotionModel motion_model = MotionModel::random_walk;
  double motion_step_fraction = 0.25;
  std::string case_id;

  void validate() const;
};

SimConfig desk_sim_config();
SimConfig paper_sim_config();
SimConfig tiny_sim_config();

// Named amplitude presets: mild 2/1, moderate 5/3, severe 10/6.
MotionAmplitude amplitude_preset(const std::string& name);

// Parse from text / file. Starting point is the given base (defaults or a
// preset); file values override. Unknown or malformed keys throw
// ValidationError naming the field path.
ReconConfig parse_recon_config(const std::string& text, ReconConfig base = default_recon_config());
ReconConfig load_recon_config(const std::filesystem::path& path,
                              ReconConfig base = default_recon_config());
SimConfig parse_sim_config(const std::string& text, SimConfig base = desk_sim_config());
SimConfig load_sim_config(const std::filesystem::path& path, SimConfig base = desk_sim_config());

// Serializations parse back to an identical config.
std::string serialize_recon_config(const ReconConfig& cfg);
std::string serialize_sim_config(const SimConfig& cfg);

}  // namespace gsvr
