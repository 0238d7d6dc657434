#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gsvr/common.hpp"

namespace gsvr {

// Axis-aligned voxel lattice. Voxel (x,y,z) is centered at
// origin + spacing .* (x,y,z); x is the fastest-varying index.
struct GridSpec {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims.y() * dims.x() +
           static_cast<std::size_t>(y) * dims.x() + x;
  }
  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    return origin + spacing.cwiseProduct(Eigen::Vector3d(x, y, z));
  }
  void validate() const {
    if (dims.minCoeff() <= 0) throw ValidationError("grid dims must be positive");
    if (!(spacing.minCoeff() > 0.0)) throw ValidationError("grid spacing must be positive");
    if (!origin.allFinite() || !spacing.allFinite()) throw ValidationError("grid origin/spacing must be finite");
  }
};

// Scalar volume with float32 payload (the on-disk precision).
struct VoxelVolume {
  GridSpec grid;
  std::vector<float> data;
  double intensity_scale = 1.0;  // multiply voxel values by this to undo normalization

  float at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }

  static VoxelVolume zeros(const GridSpec& g) {
    VoxelVolume v;
    v.grid = g;
    v.data.assign(g.voxel_count(), 0.0f);
    return v;
  }
};

// Double-precision grid used inside the optimization loop (TV crops,
// gradient checks) where float32 quantization would pollute derivatives.
struct DenseGrid {
  GridSpec grid;
  std::vector<double> data;

  double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
  double& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }

  static DenseGrid zeros(const GridSpec& g) {
    DenseGrid v;
    v.grid = g;
    v.data.assign(g.voxel_count(), 0.0);
    return v;
  }
};

// Trilinear sample; points outside the lattice hull evaluate to 0.
double sample_trilinear(const VoxelVolume& vol, const Eigen::Vector3d& world);

}  // namespace gsvr
