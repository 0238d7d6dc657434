// Synthetic ground-truth volumes and per-slice motion trajectories so the
// full pipeline is testable without clinical data.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gsvr/acquisition.hpp"
#include "gsvr/gaussian_field.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

enum class PhantomKind { gaussian_mixture, nested_ellipsoids, checker_smooth };

PhantomKind phantom_kind_from_string(const std::string& s);
std::string to_string(PhantomKind k);

struct PhantomParams {
  // gaussian-mixture
  int mixture_count = 150;
  double mixture_scale_min_mm = 4.0;
  double mixture_scale_max_mm = 12.0;
  // nested-ellipsoids
  int ellipsoid_count = 4;
  // checker-smooth
  double checker_period_mm = 24.0;
};

struct Phantom {
  PhantomKind kind = PhantomKind::gaussian_mixture;
  VoxelVolume volume;  // intensities in [0,1]
  std::optional<GaussianSet> exact_set;  // gaussian-mixture only
  std::uint64_t seed = 0;
};

// Deterministic in (kind, params, spacing, dims, seed). For the
// gaussian-mixture kind the stored volume is exactly the rasterization of
// exact_set, giving a representable optimization target.
Phantom make_phantom(PhantomKind kind, const PhantomParams& params, double spacing_mm,
                     const Eigen::Vector3i& dims, std::uint64_t seed);

enum class MotionModel { independent, random_walk };

MotionModel motion_model_from_string(const std::string& s);
std::string to_string(MotionModel m);

struct MotionAmplitude {
  double max_rot_deg = 0.0;
  double max_trans_mm = 0.0;
};

struct MotionTrajectory {
  std::vector<RigidTransform> per_slice;
  MotionAmplitude amplitude;
  MotionModel model = MotionModel::independent;
};

// independent: per-slice axis-angle and translation components uniform in
// [-max, max], norms clamped to the amplitude. random_walk: increments with
// per-step bound step_fraction * amplitude, cumulative state projected onto
// the amplitude ball (projection is non-expansive, so consecutive geodesic
// steps stay within the per-step bound).
MotionTrajectory make_trajectory(int n_slices, const MotionAmplitude& amplitude,
                                 MotionModel model, std::uint64_t seed,
                                 double step_fraction = 0.25);

struct Protocol {
  int n_stacks = 3;
  int slices_per_stack = 20;       // 0 = derive from coverage, clamped to [15,30]
  int rows = 128, cols = 128;
  double in_plane_mm = 1.0;
  double thickness_min_mm = 2.5;   // per-stack thickness drawn uniformly
  double thickness_max_mm = 3.5;
  double gap_factor = 1.0;         // slice_gap = gap_factor * thickness
  Eigen::Vector3i psf_samples = Eigen::Vector3i(1, 1, 5);
  double psf_inplane_factor = 1.2;
  double psf_thickness_factor = 1.0;
  double noise_sigma = 0.0;

  void validate() const;
};

// The section-3-style protocol at clinical scale.
Protocol paper_protocol();
// 1/8-linear-scale replica for desk-scale tests: 64^3 phantom at 1.6 mm,
// 3 stacks x 20 slices of 48x48 at 2 mm in-plane / 4 mm thickness.
Protocol desk_protocol();
// Very small preset for smoke tests.
Protocol tiny_protocol();

struct CaseBundle {
  SliceStack stacks;          // motion state = truth (simulation output)
  VoxelVolume truth_volume;
  Phantom phantom;
  Protocol protocol;
  MotionAmplitude amplitude;
  MotionModel motion_model = MotionModel::independent;
  std::uint64_t seed = 0;
};

// Three orthogonal stacks (axial/coronal/sagittal) of the phantom under
// per-slice trajectory motion with PSF blur and optional noise.
CaseBundle make_benchmark_case(const Phantom& phantom, const Protocol& protocol,
                               const MotionAmplitude& amplitude, MotionModel model,
                               std::uint64_t seed);

}  // namespace gsvr
