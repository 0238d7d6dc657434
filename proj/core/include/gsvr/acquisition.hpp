// Forward slice acquisition model: PSF-weighted sampling of a volumetric
// field over transformed slice pixel lattices, and its reverse-mode pass.
#pragma once

#include <optional>
#include <vector>

#include "gsvr/gaussian_field.hpp"
#include "gsvr/image.hpp"
#include "gsvr/rigid_motion.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

// Anisotropic Gaussian point-spread function discretized by a fixed
// tensor-product quadrature in the slice-local frame.
struct PsfModel {
  Vec3 sigma = Vec3::Ones();              // mm: in-plane x, in-plane y, through-plane
  std::vector<Vec3> sample_offsets;       // slice-local mm
  std::vector<double> sample_weights;     // positive, sum to 1
};

// FWHM -> sigma for a Gaussian profile.
double fwhm_to_sigma(double fwhm);

// Sigmas follow the slice-profile convention: in-plane FWHM =
// inplane_fwhm_factor * spacing, through-plane FWHM = thickness_factor *
// slice_thickness. Offsets lie on a tensor-product grid spanning +-2 sigma
// per axis; weights are normalized Gaussian evaluations at the offsets.
PsfModel build_psf(const SliceGeometry& geom, const Eigen::Vector3i& samples_per_axis,
                   double inplane_fwhm_factor = 1.2, double thickness_factor = 1.0);

// One stack of parallel slices. geom.nominal_pose places the stack center;
// slice k's plane sits at local z = (k - (n-1)/2) * slice_gap.
struct Stack {
  SliceGeometry geom;
  std::vector<Image2D> slices;
  std::vector<RigidTransform> motion;       // current estimate / simulation truth state
  std::vector<RigidTransform> truth_motion; // empty unless simulated
  int id = 0;

  int num_slices() const { return static_cast<int>(slices.size()); }
  SliceGeometry slice_geometry(int k) const;
  void validate() const;
};

struct SliceStack {
  std::vector<Stack> stacks;
  double intensity_scale = 1.0;  // multiply pixel values by this to undo normalization

  int total_slices() const;
  void validate() const;
};

// Immutable snapshot used by evaluation passes.
struct FieldView {
  const FieldCache* cache = nullptr;
  const SpatialIndex* index = nullptr;
};

// pixel(r,c) = sum_k w_k V(world sample k): realizes downsampling implicitly
// by evaluating at the native pixel lattice only.
Image2D forward_slice(const FieldView& field, const SliceGeometry& geom,
                      const RigidTransform& t, const PsfModel& psf);

// Trilinear variant for voxel-volume sources (simulation).
Image2D forward_slice_volume(const VoxelVolume& vol, const SliceGeometry& geom,
                             const RigidTransform& t, const PsfModel& psf);

// Reverse-mode pass for one slice: accumulates Gaussian-parameter gradients
// into grads and returns the gradient with respect to the 6 motion
// parameters in the chart at zero around t (axis-angle, translation).
Vec6 forward_slice_backward(const FieldView& field, const SliceGeometry& geom,
                            const RigidTransform& t, const PsfModel& psf,
                            const Image2D& upstream, GaussianGrads& grads);

// Simulates one stack from either source; optional additive Gaussian noise
// on top of the noiseless forward model. Transforms become both the motion
// state and the recorded ground truth.
struct NoiseModel {
  double sigma = 0.0;  // normalized intensity units; 0 disables
  std::uint64_t seed = 0;
};

Stack simulate_stack(const VoxelVolume& volume, const SliceGeometry& stack_geom,
                     int n_slices, const std::vector<RigidTransform>& transforms,
                     const PsfModel& psf, const NoiseModel& noise);
Stack simulate_stack(const FieldView& field, const SliceGeometry& stack_geom,
                     int n_slices, const std::vector<RigidTransform>& transforms,
                     const PsfModel& psf, const NoiseModel& noise);

// Axis-aligned box containing every pixel sample of every slice under the
// current motion state, padded by the given margin.
Eigen::AlignedBox3d slice_union_bounds(const SliceStack& stacks, double margin_mm);

}  // namespace gsvr
