// Intensity-weighted anisotropic Gaussian volume representation: bounded
// evaluation at arbitrary points, analytic parameter gradients, uniform-grid
// acceleration, and rasterization onto voxel lattices.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gsvr/common.hpp"
#include "gsvr/rigid_motion.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

struct GaussianPrimitive {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w,x,y,z)
  Vec3 log_scales = Vec3::Zero();    // log-mm
  double intensity = 0.0;
};

struct GaussianSet {
  std::vector<Vec3> centers;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> intensities;

  std::size_t size() const { return centers.size(); }
  GaussianPrimitive primitive(std::size_t j) const {
    return {centers[j], rotations[j], log_scales[j], intensities[j]};
  }
  void push_back(const GaussianPrimitive& g) {
    centers.push_back(g.center);
    rotations.push_back(g.rotation);
    log_scales.push_back(g.log_scales);
    intensities.push_back(g.intensity);
  }
  // Truncation radius 3*sigma_j, sigma_j = max scale (conservative for
  // anisotropic primitives).
  double support_radius(std::size_t j) const;

  // Checks unit quaternions (1e-6), scale bounds, consistent array lengths,
  // and SPD covariance via Cholesky on a deterministic sample of primitives.
  void validate(double scale_min, double scale_max) const;
};

// Gradient accumulation buffers, shape-compatible with a GaussianSet.
struct GaussianGrads {
  std::vector<Vec3> centers;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> intensities;

  void resize(std::size_t n);
  void set_zero();
  void add(const GaussianGrads& other);
  std::size_t size() const { return centers.size(); }
};

// Per-primitive quantities derived from the raw parameters; rebuilt after
// every parameter change, immutable during evaluation passes.
struct FieldCache {
  struct Fwd {
    double mu[3];
    double r2;       // squared truncation radius
    double rot[9];   // R row-major
    double inv_s2[3];
    double intensity;
  };
  struct Bwd {
    double dR[4][9];  // dR/dq_k, row-major
  };

  std::vector<Fwd> fwd;
  std::vector<Bwd> bwd;
  std::vector<double> radius;  // 3*sigma_max per primitive

  std::size_t size() const { return fwd.size(); }
  void rebuild(const GaussianSet& set);
};

// Uniform grid over an axis-aligned box. Every primitive is registered in
// all cells its padded support ball touches; queries return ascending id
// supersets of the true neighbor sets for any point, inside or outside the
// box. The pad absorbs parameter drift between rebuilds.
struct SpatialIndex {
  Vec3 origin = Vec3::Zero();
  double cell_size = 1.0;
  double pad = 0.0;
  Eigen::Vector3i dims = Eigen::Vector3i::Ones();

  std::vector<std::uint32_t> cell_start;  // CSR offsets, size nx*ny*nz+1
  std::vector<std::uint32_t> ids;         // ascending within each cell
  // Build-time center/padded-radius snapshot for the conservative prefilter.
  std::vector<double> ex, ey, ez, er2;    // aligned with ids
  std::vector<Vec3> built_centers;
  std::vector<double> built_radius;

  std::size_t cell_of(const Vec3& x) const;
  std::span<const std::uint32_t> query(const Vec3& x) const;
};

SpatialIndex build_index(const GaussianSet& set, const Eigen::AlignedBox3d& bounds,
                         double cell_size);

// True when accumulated center/scale drift can defeat the index pad and a
// rebuild is required for the superset guarantee.
bool index_needs_rebuild(const SpatialIndex& index, const GaussianSet& set);

// Median of 3*sigma_j; the default index cell size.
double default_cell_size(const GaussianSet& set);

// Single-primitive evaluation with hard truncation outside 3*sigma.
double eval_primitive(const GaussianPrimitive& g, const Vec3& x);

// Field value at one point: ascending-id sum over in-range primitives.
double eval_point(const FieldCache& cache, const SpatialIndex& index, const Vec3& x);

// Field value and spatial gradient dV/dx.
double eval_point_with_gradient(const FieldCache& cache, const SpatialIndex& index,
                                const Vec3& x, Vec3& dv_dx);

std::vector<double> eval_volume(const GaussianSet& set, const SpatialIndex& index,
                                std::span<const Vec3> points);

// Accumulates upstream-weighted analytic gradients for all four parameter
// groups into grads (quaternion gradients tangent to the unit sphere).
// When point_grads is non-null it receives upstream[k] * dV/dx_k.
void eval_volume_backward(const FieldCache& cache, const SpatialIndex& index,
                          std::span<const Vec3> points, std::span<const double> upstream,
                          GaussianGrads& grads, std::vector<Vec3>* point_grads = nullptr);

// Same gradients computed for a single point with upstream weight 1,
// convenience for composition in the acquisition backward pass.
void accumulate_point_backward(const FieldCache& cache, const SpatialIndex& index,
                               const Vec3& x, double upstream, GaussianGrads& grads,
                               Vec3* dv_dx = nullptr);

VoxelVolume rasterize_to_grid(const GaussianSet& set, const SpatialIndex& index,
                              const GridSpec& grid);
DenseGrid rasterize_dense(const FieldCache& cache, const SpatialIndex& index,
                          const GridSpec& grid);

}  // namespace gsvr
