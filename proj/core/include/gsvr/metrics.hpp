// Quantitative evaluation: PSNR, volumetric SSIM, NRMSE, motion-recovery
// error summaries with gauge alignment, and rigid volume registration.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gsvr/rigid_motion.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

// 10 log10(peak^2 / MSE); identical volumes report the 99 dB cap.
// mask (optional) restricts the averaged voxels; 1 byte per voxel.
double psnr(const VoxelVolume& ref, const VoxelVolume& test, double peak,
            const std::vector<std::uint8_t>* mask = nullptr);

constexpr double kPsnrCapDb = 99.0;

// Mean local SSIM with a 3D Gaussian window (zero padding).
double ssim3d(const VoxelVolume& ref, const VoxelVolume& test, int window = 11,
              double sigma = 1.5, double dynamic_range = 1.0);

// RMSE / (max - min of ref), optionally masked.
double nrmse(const VoxelVolume& ref, const VoxelVolume& test,
             const std::vector<std::uint8_t>* mask = nullptr);

// Voxels with ref intensity > 0, dilated by the given radius (in voxels).
std::vector<std::uint8_t> support_mask(const VoxelVolume& ref, int dilate = 2);

struct MotionReport {
  double rot_median_deg = 0.0, rot_mean_deg = 0.0, rot_max_deg = 0.0;
  double trans_median_mm = 0.0, trans_mean_mm = 0.0, trans_max_mm = 0.0;
  RigidTransform gauge;  // applied to every estimate before comparison
  std::vector<double> rot_deg;   // per slice, after alignment
  std::vector<double> trans_mm;  // per slice, after alignment
};

// Left-equivariant mean pose: chordal-mean rotation (largest eigenvector of
// the quaternion outer-product sum) and arithmetic-mean translation.
RigidTransform mean_pose(const std::vector<RigidTransform>& poses);

// Per-slice geodesic errors between full slice poses after removing the
// global gauge g = mean(truth) * mean(estimate)^-1, which any single rigid
// motion of the reconstructed volume can absorb.
MotionReport motion_report(const std::vector<RigidTransform>& truth,
                           const std::vector<RigidTransform>& estimate);

// Resamples test through rigid transform g onto ref's lattice:
// out(voxel) = test(g(voxel center)).
VoxelVolume resample_rigid(const VoxelVolume& test, const RigidTransform& g,
                           const GridSpec& ref_grid);

// Rigid registration of test onto ref minimizing masked MSE: exhaustive
// small-angle/translation grid followed by pattern-search refinement.
// Returns g such that resample_rigid(test, g, ref.grid) ~= ref.
RigidTransform register_rigid(const VoxelVolume& ref, const VoxelVolume& test,
                              double max_rot_deg = 6.0, double max_trans_mm = 6.0);

}  // namespace gsvr
