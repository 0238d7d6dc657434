#include "gsvr/gaussian_field.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

namespace gsvr {

double GaussianSet::support_radius(std::size_t j) const {
  return 3.0 * std::exp(log_scales[j].maxCoeff());
}

void GaussianSet::validate(double scale_min, double scale_max) const {
  const std::size_t n = centers.size();
  if (rotations.size() != n || log_scales.size() != n || intensities.size() != n)
    throw ValidationError("gaussian set: parameter arrays have mismatched lengths");
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(rotations[j].norm() - 1.0) > 1e-6)
      throw ValidationError("gaussian set: quaternion not unit-norm at j=" + std::to_string(j));
    const Vec3 s = log_scales[j].array().exp();
    if (!(s.minCoeff() >= scale_min && s.maxCoeff() <= scale_max))
      throw ValidationError("gaussian set: scale out of [scale_min, scale_max] at j=" + std::to_string(j));
    if (!centers[j].allFinite() || !std::isfinite(intensities[j]))
      throw ValidationError("gaussian set: non-finite parameter at j=" + std::to_string(j));
  }
  // SPD spot check on a deterministic sample.
  const std::size_t stride = std::max<std::size_t>(1, n / 16);
  for (std::size_t j = 0; j < n; j += stride) {
    const Mat3 r = quat_to_matrix(rotations[j]);
    const Vec3 s2 = (2.0 * log_scales[j]).array().exp();
    const Mat3 cov = r * s2.asDiagonal() * r.transpose();
    Eigen::LLT<Mat3> llt(cov);
    if (llt.info() != Eigen::Success)
      throw ValidationError("gaussian set: covariance not SPD at j=" + std::to_string(j));
  }
}

void GaussianGrads::resize(std::size_t n) {
  centers.assign(n, Vec3::Zero());
  rotations.assign(n, Vec4::Zero());
  log_scales.assign(n, Vec3::Zero());
  intensities.assign(n, 0.0);
}

void GaussianGrads::set_zero() {
  std::fill(centers.begin(), centers.end(), Vec3::Zero());
  std::fill(rotations.begin(), rotations.end(), Vec4::Zero());
  std::fill(log_scales.begin(), log_scales.end(), Vec3::Zero());
  std::fill(intensities.begin(), intensities.end(), 0.0);
}

void GaussianGrads::add(const GaussianGrads& other) {
  for (std::size_t j = 0; j < centers.size(); ++j) {
    centers[j] += other.centers[j];
    rotations[j] += other.rotations[j];
    log_scales[j] += other.log_scales[j];
    intensities[j] += other.intensities[j];
  }
}

void FieldCache::rebuild(const GaussianSet& set) {
  const std::size_t n = set.size();
  fwd.resize(n);
  bwd.resize(n);
  radius.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    Fwd& f = fwd[j];
    const Vec3& mu = set.centers[j];
    f.mu[0] = mu.x();
    f.mu[1] = mu.y();
    f.mu[2] = mu.z();
    Mat3 r;
    Mat3 dr[4];
    quat_matrix_derivs(set.rotations[j], r, dr);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) f.rot[3 * a + b] = r(a, b);
    const Vec3 s = set.log_scales[j].array().exp();
    for (int a = 0; a < 3; ++a) f.inv_s2[a] = 1.0 / (s[a] * s[a]);
    const double rad = 3.0 * s.maxCoeff();
    radius[j] = rad;
    f.r2 = rad * rad;
    f.intensity = set.intensities[j];
    for (int k = 0; k < 4; ++k)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) bwd[j].dR[k][3 * a + b] = dr[k](a, b);
  }
}

std::size_t SpatialIndex::cell_of(const Vec3& x) const {
  auto clamp_axis = [&](double v, double o, int n) {
    int i = static_cast<int>(std::floor((v - o) / cell_size));
    return std::clamp(i, 0, n - 1);
  };
  const int ix = clamp_axis(x.x(), origin.x(), dims.x());
  const int iy = clamp_axis(x.y(), origin.y(), dims.y());
  const int iz = clamp_axis(x.z(), origin.z(), dims.z());
  return (static_cast<std::size_t>(iz) * dims.y() + iy) * dims.x() + ix;
}

std::span<const std::uint32_t> SpatialIndex::query(const Vec3& x) const {
  const std::size_t c = cell_of(x);
  return {ids.data() + cell_start[c], ids.data() + cell_start[c + 1]};
}

SpatialIndex build_index(const GaussianSet& set, const Eigen::AlignedBox3d& bounds,
                         double cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw ValidationError("build_index: cell_size must be positive and finite");
  if (!bounds.min().allFinite() || !bounds.max().allFinite() || bounds.isEmpty())
    throw ValidationError("build_index: bounds must be finite and non-empty");

  SpatialIndex index;
  index.origin = bounds.min();
  index.cell_size = cell_size;
  index.pad = 0.5 * cell_size;
  const Vec3 extent = bounds.max() - bounds.min();
  for (int a = 0; a < 3; ++a)
    index.dims[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / cell_size)));

  const std::size_t n = set.size();
  const std::size_t num_cells =
      static_cast<std::size_t>(index.dims.x()) * index.dims.y() * index.dims.z();

  index.built_centers = set.centers;
  index.built_radius.resize(n);
  std::vector<std::array<int, 6>> ranges(n);
  std::vector<std::uint32_t> counts(num_cells, 0);

  auto cell_range = [&](double lo, double hi, double o, int dim, int& a, int& b) {
    a = std::clamp(static_cast<int>(std::floor((lo - o) / cell_size)), 0, dim - 1);
    b = std::clamp(static_cast<int>(std::floor((hi - o) / cell_size)), 0, dim - 1);
  };

  for (std::size_t j = 0; j < n; ++j) {
    const double r = set.support_radius(j);
    index.built_radius[j] = r;
    const double reach = r + index.pad;
    const Vec3& mu = set.centers[j];
    auto& rg = ranges[j];
    cell_range(mu.x() - reach, mu.x() + reach, index.origin.x(), index.dims.x(), rg[0], rg[1]);
    cell_range(mu.y() - reach, mu.y() + reach, index.origin.y(), index.dims.y(), rg[2], rg[3]);
    cell_range(mu.z() - reach, mu.z() + reach, index.origin.z(), index.dims.z(), rg[4], rg[5]);
    for (int z = rg[4]; z <= rg[5]; ++z)
      for (int y = rg[2]; y <= rg[3]; ++y)
        for (int x = rg[0]; x <= rg[1]; ++x)
          ++counts[(static_cast<std::size_t>(z) * index.dims.y() + y) * index.dims.x() + x];
  }

  index.cell_start.assign(num_cells + 1, 0);
  for (std::size_t c = 0; c < num_cells; ++c)
    index.cell_start[c + 1] = index.cell_start[c] + counts[c];
  const std::size_t total = index.cell_start[num_cells];
  index.ids.resize(total);
  index.ex.resize(total);
  index.ey.resize(total);
  index.ez.resize(total);
  index.er2.resize(total);

  std::vector<std::uint32_t> cursor(index.cell_start.begin(), index.cell_start.end() - 1);
  for (std::size_t j = 0; j < n; ++j) {  // ascending j keeps cell lists sorted
    const auto& rg = ranges[j];
    const Vec3& mu = set.centers[j];
    const double pr = index.built_radius[j] + index.pad;
    for (int z = rg[4]; z <= rg[5]; ++z)
      for (int y = rg[2]; y <= rg[3]; ++y)
        for (int x = rg[0]; x <= rg[1]; ++x) {
          const std::size_t c =
              (static_cast<std::size_t>(z) * index.dims.y() + y) * index.dims.x() + x;
          const std::uint32_t slot = cursor[c]++;
          index.ids[slot] = static_cast<std::uint32_t>(j);
          index.ex[slot] = mu.x();
          index.ey[slot] = mu.y();
          index.ez[slot] = mu.z();
          index.er2[slot] = pr * pr;
        }
  }
  return index;
}

bool index_needs_rebuild(const SpatialIndex& index, const GaussianSet& set) {
  if (index.built_centers.size() != set.size()) return true;
  for (std::size_t j = 0; j < set.size(); ++j) {
    const double drift = (set.centers[j] - index.built_centers[j]).norm() +
                         std::max(0.0, set.support_radius(j) - index.built_radius[j]);
    if (drift > index.pad) return true;
  }
  return false;
}

double default_cell_size(const GaussianSet& set) {
  if (set.size() == 0) return 1.0;
  std::vector<double> r(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) r[j] = set.support_radius(j);
  auto mid = r.begin() + r.size() / 2;
  std::nth_element(r.begin(), mid, r.end());
  return std::max(*mid, 1e-6);
}

double eval_primitive(const GaussianPrimitive& g, const Vec3& x) {
  const Vec3 d = x - g.center;
  const Vec3 s = g.log_scales.array().exp();
  const double r = 3.0 * s.maxCoeff();
  if (d.squaredNorm() > r * r) return 0.0;
  const Mat3 rot = quat_to_matrix(g.rotation);
  const Vec3 u = rot.transpose() * d;
  const double q = (u.array() / s.array()).square().sum();
  return g.intensity * std::exp(-0.5 * q);
}

namespace {

// Shared candidate walk: calls visit(j, entry_fwd, d, d2) for every primitive
// whose current support ball contains x, in ascending id order.
template <typename Visit>
inline void for_neighbors(const FieldCache& cache, const SpatialIndex& index, const Vec3& x,
                          Visit&& visit) {
  const std::size_t c = index.cell_of(x);
  const std::uint32_t begin = index.cell_start[c];
  const std::uint32_t end = index.cell_start[c + 1];
  const double px = x.x(), py = x.y(), pz = x.z();
  for (std::uint32_t e = begin; e < end; ++e) {
    // conservative prefilter against the padded build-time ball
    const double bx = px - index.ex[e];
    const double by = py - index.ey[e];
    const double bz = pz - index.ez[e];
    if (bx * bx + by * by + bz * bz > index.er2[e]) continue;
    const std::uint32_t j = index.ids[e];
    const FieldCache::Fwd& f = cache.fwd[j];
    const double dx = px - f.mu[0];
    const double dy = py - f.mu[1];
    const double dz = pz - f.mu[2];
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 > f.r2) continue;  // hard truncation at 3*sigma
    visit(j, f, dx, dy, dz);
  }
}

}  // namespace

double eval_point(const FieldCache& cache, const SpatialIndex& index, const Vec3& x) {
  double acc = 0.0;
  for_neighbors(cache, index, x, [&](std::uint32_t, const FieldCache::Fwd& f, double dx,
                                     double dy, double dz) {
    const double u0 = f.rot[0] * dx + f.rot[3] * dy + f.rot[6] * dz;
    const double u1 = f.rot[1] * dx + f.rot[4] * dy + f.rot[7] * dz;
    const double u2 = f.rot[2] * dx + f.rot[5] * dy + f.rot[8] * dz;
    const double q = u0 * u0 * f.inv_s2[0] + u1 * u1 * f.inv_s2[1] + u2 * u2 * f.inv_s2[2];
    acc += f.intensity * std::exp(-0.5 * q);
  });
  return acc;
}

double eval_point_with_gradient(const FieldCache& cache, const SpatialIndex& index,
                                const Vec3& x, Vec3& dv_dx) {
  double acc = 0.0;
  double gx = 0.0, gy = 0.0, gz = 0.0;
  for_neighbors(cache, index, x, [&](std::uint32_t, const FieldCache::Fwd& f, double dx,
                                     double dy, double dz) {
    const double u0 = f.rot[0] * dx + f.rot[3] * dy + f.rot[6] * dz;
    const double u1 = f.rot[1] * dx + f.rot[4] * dy + f.rot[7] * dz;
    const double u2 = f.rot[2] * dx + f.rot[5] * dy + f.rot[8] * dz;
    const double q = u0 * u0 * f.inv_s2[0] + u1 * u1 * f.inv_s2[1] + u2 * u2 * f.inv_s2[2];
    const double c = f.intensity * std::exp(-0.5 * q);
    acc += c;
    // dV/dx = -c * Sigma^-1 d = -c * R (u / s^2)
    const double v0 = u0 * f.inv_s2[0];
    const double v1 = u1 * f.inv_s2[1];
    const double v2 = u2 * f.inv_s2[2];
    gx -= c * (f.rot[0] * v0 + f.rot[1] * v1 + f.rot[2] * v2);
    gy -= c * (f.rot[3] * v0 + f.rot[4] * v1 + f.rot[5] * v2);
    gz -= c * (f.rot[6] * v0 + f.rot[7] * v1 + f.rot[8] * v2);
  });
  dv_dx = Vec3(gx, gy, gz);
  return acc;
}

std::vector<double> eval_volume(const GaussianSet& set, const SpatialIndex& index,
                                std::span<const Vec3> points) {
  FieldCache cache;
  cache.rebuild(set);
  std::vector<double> out(points.size());
  parallel_chunks(points.size(), 64, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) out[k] = eval_point(cache, index, points[k]);
  });
  return out;
}

void accumulate_point_backward(const FieldCache& cache, const SpatialIndex& index,
                               const Vec3& x, double upstream, GaussianGrads& grads,
                               Vec3* dv_dx) {
  if (dv_dx) *dv_dx = Vec3::Zero();
  if (upstream == 0.0 && !dv_dx) return;
  for_neighbors(cache, index, x, [&](std::uint32_t j, const FieldCache::Fwd& f, double dx,
                                     double dy, double dz) {
    const double u0 = f.rot[0] * dx + f.rot[3] * dy + f.rot[6] * dz;
    const double u1 = f.rot[1] * dx + f.rot[4] * dy + f.rot[7] * dz;
    const double u2 = f.rot[2] * dx + f.rot[5] * dy + f.rot[8] * dz;
    const double q = u0 * u0 * f.inv_s2[0] + u1 * u1 * f.inv_s2[1] + u2 * u2 * f.inv_s2[2];
    const double e = std::exp(-0.5 * q);
    const double c = f.intensity * e;
    const double v0 = u0 * f.inv_s2[0];
    const double v1 = u1 * f.inv_s2[1];
    const double v2 = u2 * f.inv_s2[2];
    // Sigma^-1 d = R v
    const double sv0 = f.rot[0] * v0 + f.rot[1] * v1 + f.rot[2] * v2;
    const double sv1 = f.rot[3] * v0 + f.rot[4] * v1 + f.rot[5] * v2;
    const double sv2 = f.rot[6] * v0 + f.rot[7] * v1 + f.rot[8] * v2;
    if (dv_dx) *dv_dx -= c * Vec3(sv0, sv1, sv2);
    if (upstream == 0.0) return;
    const double w = upstream;
    grads.intensities[j] += w * e;
    grads.centers[j] += (w * c) * Vec3(sv0, sv1, sv2);
    grads.log_scales[j] += (w * c) * Vec3(u0 * v0, u1 * v1, u2 * v2);
    const auto& dR = cache.bwd[j].dR;
    for (int k = 0; k < 4; ++k) {
      const double* m = dR[k];
      // d/dq_k of -0.5 u^T S^-2 u = -(d^T dR_k v)
      const double t0 = m[0] * v0 + m[1] * v1 + m[2] * v2;
      const double t1 = m[3] * v0 + m[4] * v1 + m[5] * v2;
      const double t2 = m[6] * v0 + m[7] * v1 + m[8] * v2;
      grads.rotations[j][k] -= w * c * (dx * t0 + dy * t1 + dz * t2);
    }
  });
}

void eval_volume_backward(const FieldCache& cache, const SpatialIndex& index,
                          std::span<const Vec3> points, std::span<const double> upstream,
                          GaussianGrads& grads, std::vector<Vec3>* point_grads) {
  if (grads.size() != cache.size()) grads.resize(cache.size());
  if (point_grads) point_grads->assign(points.size(), Vec3::Zero());

  constexpr int kChunks = 32;
  const int chunks = static_cast<int>(std::min<std::size_t>(kChunks, std::max<std::size_t>(points.size(), 1)));
  std::vector<GaussianGrads> partial(chunks);
  parallel_chunks(points.size(), chunks, [&](int c, std::size_t begin, std::size_t end) {
    partial[c].resize(cache.size());
    for (std::size_t k = begin; k < end; ++k) {
      Vec3 pg;
      accumulate_point_backward(cache, index, points[k], upstream[k], partial[c],
                                point_grads ? &pg : nullptr);
      if (point_grads) (*point_grads)[k] = upstream[k] * pg;
    }
  });
  for (int c = 0; c < chunks; ++c)
    if (!partial[c].centers.empty()) grads.add(partial[c]);
}

VoxelVolume rasterize_to_grid(const GaussianSet& set, const SpatialIndex& index,
                              const GridSpec& grid) {
  grid.validate();
  FieldCache cache;
  cache.rebuild(set);
  VoxelVolume vol = VoxelVolume::zeros(grid);
  const std::size_t n = grid.voxel_count();
  const int nx = grid.dims.x(), ny = grid.dims.y();
  parallel_chunks(n, 64, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i % nx);
      const int y = static_cast<int>((i / nx) % ny);
      const int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
      vol.data[i] = static_cast<float>(eval_point(cache, index, grid.voxel_center(x, y, z)));
    }
  });
  return vol;
}

DenseGrid rasterize_dense(const FieldCache& cache, const SpatialIndex& index,
                          const GridSpec& grid) {
  grid.validate();
  DenseGrid vol = DenseGrid::zeros(grid);
  const std::size_t n = grid.voxel_count();
  const int nx = grid.dims.x(), ny = grid.dims.y();
  parallel_chunks(n, 64, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i % nx);
      const int y = static_cast<int>((i / nx) % ny);
      const int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
      vol.data[i] = eval_point(cache, index, grid.voxel_center(x, y, z));
    }
  });
  return vol;
}

}  // namespace gsvr
