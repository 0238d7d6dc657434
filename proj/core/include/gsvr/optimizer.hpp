// Joint self-supervised optimization: Adam with per-parameter-group learning
// rates, the coarse-to-fine stage schedule, Gaussian initialization, and
// stage transitions.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "gsvr/acquisition.hpp"
#include "gsvr/config.hpp"
#include "gsvr/objective.hpp"

namespace gsvr {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

// Standard bias-corrected update: p -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(double* params, const double* grads, std::size_t n, AdamState& state,
               double lr, const AdamSpec& spec);

enum class ParamGroup { center, intensity, scale, rotation, slice_translation, slice_rotation };

// mu decays exponentially from lr.mu_start to lr.mu_end across all stages
// combined; the other groups are constant.
double lr_schedule(ParamGroup group, const LrSpec& lr, long global_iter, long total_iters);

// Centers on a uniform lattice over the slice-union bounding box with
// spacing matched to the budget, isotropic scales 0.75x the lattice spacing,
// identity rotations, intensities from the mean of nearest acquired-slice
// samples (0 where none). Rejects budget < 8 or empty stacks.
GaussianSet init_gaussians(const SliceStack& stacks, std::size_t budget,
                           InitMode mode = InitMode::grid_backproject);

// Carries over all primitives; when new_budget exceeds the current count,
// inserts primitives at the largest-residual slice-sample locations, seeded
// with the nearest neighbor's scale and the local residual intensity.
GaussianSet stage_transition(const GaussianSet& set,
                             const std::vector<SliceGeometry>& slice_geoms,
                             const std::vector<const Image2D*>& acquired,
                             const std::vector<RigidTransform>& transforms,
                             const std::vector<const PsfModel*>& psf_per_slice,
                             std::size_t new_budget);

struct LossTraceRow {
  long iter = 0;     // global iteration
  int stage = 0;
  double total = 0.0, l1 = 0.0, dssim = 0.0, tv = 0.0;
  double lr_mu = 0.0;
};

struct ReconResult {
  GaussianSet set;
  std::vector<std::vector<RigidTransform>> motion;  // [stack][slice] final state
  std::vector<LossTraceRow> trace;
  double intensity_scale = 1.0;
  GridSpec recon_grid;
  long iterations_run = 0;
  int divergence_restores = 0;
};

// Runs init -> stage loop (forward slices, loss, backward, Adam on all six
// parameter groups) -> final field and motion estimates. Deterministic for a
// fixed config and seed. Surfaces non-finite loss as DivergedError after the
// configured retries. provided_init overrides init.mode/path file loading.
ReconResult reconstruct(const SliceStack& input, const ReconConfig& cfg,
                        std::ostream* run_log = nullptr,
                        const std::filesystem::path& checkpoint_dir = {},
                        const GaussianSet* provided_init = nullptr);

// AdamState blob I/O ("GADM" container), used by checkpoints.
void write_adam_blob(const std::filesystem::path& path, const std::vector<AdamState>& states);
std::vector<AdamState> read_adam_blob(const std::filesystem::path& path);

}  // namespace gsvr
