#include "gsvr/acquisition.hpp"

#include <array>
#include <cmath>

namespace gsvr {

double sample_trilinear(const VoxelVolume& vol, const Eigen::Vector3d& world) {
  const GridSpec& g = vol.grid;
  const Eigen::Vector3d f = (world - g.origin).cwiseQuotient(g.spacing);
  const int x0 = static_cast<int>(std::floor(f.x()));
  const int y0 = static_cast<int>(std::floor(f.y()));
  const int z0 = static_cast<int>(std::floor(f.z()));
  const double tx = f.x() - x0, ty = f.y() - y0, tz = f.z() - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        if (x < 0 || y < 0 || z < 0 || x >= g.dims.x() || y >= g.dims.y() || z >= g.dims.z())
          continue;
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * vol.at(x, y, z);
      }
  return acc;
}

double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

PsfModel build_psf(const SliceGeometry& geom, const Eigen::Vector3i& samples_per_axis,
                   double inplane_fwhm_factor, double thickness_factor) {
  geom.validate();
  for (int a = 0; a < 3; ++a) {
    if (samples_per_axis[a] < 1 || samples_per_axis[a] % 2 == 0)
      throw ValidationError("build_psf: samples_per_axis must be odd and >= 1");
  }
  if (!(inplane_fwhm_factor > 0.0) || !(thickness_factor > 0.0))
    throw ValidationError("build_psf: FWHM factors must be positive");

  PsfModel psf;
  psf.sigma = Vec3(fwhm_to_sigma(inplane_fwhm_factor * geom.in_plane_spacing.x()),
                   fwhm_to_sigma(inplane_fwhm_factor * geom.in_plane_spacing.y()),
                   fwhm_to_sigma(thickness_factor * geom.slice_thickness));

  std::array<std::vector<double>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const int n = samples_per_axis[a];
    axes[a].resize(n);
    if (n == 1) {
      axes[a][0] = 0.0;
    } else {
      const double span = 2.0 * psf.sigma[a];
      for (int i = 0; i < n; ++i) axes[a][i] = -span + 2.0 * span * i / (n - 1);
    }
  }
  double wsum = 0.0;
  for (double oz : axes[2])
    for (double oy : axes[1])
      for (double ox : axes[0]) {
        const Vec3 off(ox, oy, oz);
        const double w = std::exp(-0.5 * (off.array() / psf.sigma.array()).square().sum());
        psf.sample_offsets.push_back(off);
        psf.sample_weights.push_back(w);
        wsum += w;
      }
  for (double& w : psf.sample_weights) w /= wsum;
  return psf;
}

SliceGeometry Stack::slice_geometry(int k) const {
  SliceGeometry g = geom;
  const double z = (k - 0.5 * (num_slices() - 1)) * geom.slice_gap;
  g.nominal_pose.t = geom.nominal_pose.t + quat_rotate(geom.nominal_pose.q, Vec3(0, 0, z));
  return g;
}

void Stack::validate() const {
  geom.validate();
  if (slices.empty()) throw ValidationError("stack must contain at least one slice");
  if (motion.size() != slices.size())
    throw ValidationError("stack: motion state count must match slice count");
  if (!truth_motion.empty() && truth_motion.size() != slices.size())
    throw ValidationError("stack: truth transform count must match slice count");
  for (const Image2D& s : slices) {
    if (s.rows != geom.rows || s.cols != geom.cols)
      throw ValidationError("stack: slice pixel array does not match geometry");
    for (double v : s.v)
      if (!std::isfinite(v)) throw ValidationError("stack: non-finite pixel intensity");
  }
}

int SliceStack::total_slices() const {
  int n = 0;
  for (const Stack& s : stacks) n += s.num_slices();
  return n;
}

void SliceStack::validate() const {
  for (const Stack& s : stacks) s.validate();
}

Image2D forward_slice(const FieldView& field, const SliceGeometry& geom,
                      const RigidTransform& t, const PsfModel& psf) {
  Image2D out(geom.rows, geom.cols);
  // Precompose the fixed rotation chain once per slice.
  const Vec4 q_total = quat_mul(t.q, geom.nominal_pose.q);
  const Vec3 shift = geom.nominal_pose.t + t.t;
  const Mat3 rot = quat_to_matrix(q_total);
  const std::size_t n_px = out.size();
  parallel_chunks(n_px, 16, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int r = static_cast<int>(i) / geom.cols;
      const int c = static_cast<int>(i) % geom.cols;
      const Vec3 local = slice_local_point(geom, r, c);
      double acc = 0.0;
      for (std::size_t k = 0; k < psf.sample_offsets.size(); ++k) {
        const Vec3 world = rot * (local + psf.sample_offsets[k]) + shift;
        acc += psf.sample_weights[k] * eval_point(*field.cache, *field.index, world);
      }
      out.v[i] = acc;
    }
  });
  return out;
}

Image2D forward_slice_volume(const VoxelVolume& vol, const SliceGeometry& geom,
                             const RigidTransform& t, const PsfModel& psf) {
  Image2D out(geom.rows, geom.cols);
  const Vec4 q_total = quat_mul(t.q, geom.nominal_pose.q);
  const Vec3 shift = geom.nominal_pose.t + t.t;
  const Mat3 rot = quat_to_matrix(q_total);
  const std::size_t n_px = out.size();
  parallel_chunks(n_px, 16, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int r = static_cast<int>(i) / geom.cols;
      const int c = static_cast<int>(i) % geom.cols;
      const Vec3 local = slice_local_point(geom, r, c);
      double acc = 0.0;
      for (std::size_t k = 0; k < psf.sample_offsets.size(); ++k) {
        const Vec3 world = rot * (local + psf.sample_offsets[k]) + shift;
        acc += psf.sample_weights[k] * sample_trilinear(vol, world);
      }
      out.v[i] = acc;
    }
  });
  return out;
}

Vec6 forward_slice_backward(const FieldView& field, const SliceGeometry& geom,
                            const RigidTransform& t, const PsfModel& psf,
                            const Image2D& upstream, GaussianGrads& grads) {
  if (upstream.rows != geom.rows || upstream.cols != geom.cols)
    throw ValidationError("forward_slice_backward: upstream dims mismatch");
  if (grads.size() != field.cache->size()) grads.resize(field.cache->size());

  const Vec4 q_total = quat_mul(t.q, geom.nominal_pose.q);
  const Vec3 shift = geom.nominal_pose.t + t.t;
  const Mat3 rot = quat_to_matrix(q_total);
  const std::size_t n_px = upstream.size();

  constexpr int kChunks = 8;
  const int chunks = static_cast<int>(std::min<std::size_t>(kChunks, std::max<std::size_t>(n_px, 1)));
  std::vector<GaussianGrads> partial(chunks);
  std::vector<Vec6> motion_partial(chunks, Vec6::Zero());
  parallel_chunks(n_px, chunks, [&](int ci, std::size_t begin, std::size_t end) {
    partial[ci].resize(field.cache->size());
    Vec6 m = Vec6::Zero();
    for (std::size_t i = begin; i < end; ++i) {
      const double w_up = upstream.v[i];
      if (w_up == 0.0) continue;
      const int r = static_cast<int>(i) / geom.cols;
      const int c = static_cast<int>(i) % geom.cols;
      const Vec3 local = slice_local_point(geom, r, c);
      for (std::size_t k = 0; k < psf.sample_offsets.size(); ++k) {
        const Vec3 rotated = rot * (local + psf.sample_offsets[k]);
        const Vec3 world = rotated + shift;
        Vec3 dv_dx;
        accumulate_point_backward(*field.cache, *field.index, world,
                                  w_up * psf.sample_weights[k], partial[ci], &dv_dx);
        const Vec3 g = w_up * psf.sample_weights[k] * dv_dx;
        // d(world)/d(axis-angle) = -skew(rotated); translation block is I.
        m.head<3>() += rotated.cross(g);
        m.tail<3>() += g;
      }
    }
    motion_partial[ci] = m;
  });

  Vec6 motion_grad = Vec6::Zero();
  for (int c = 0; c < chunks; ++c) {
    if (!partial[c].centers.empty()) grads.add(partial[c]);
    motion_grad += motion_partial[c];
  }
  return motion_grad;
}

namespace {

template <typename SliceFn>
Stack simulate_stack_impl(const SliceGeometry& stack_geom, int n_slices,
                          const std::vector<RigidTransform>& transforms,
                          const NoiseModel& noise, SliceFn&& slice_fn) {
  if (static_cast<int>(transforms.size()) != n_slices)
    throw ValidationError("simulate_stack: transform count does not match slice count");
  Stack stack;
  stack.geom = stack_geom;
  stack.slices.resize(n_slices);
  stack.motion = transforms;
  stack.truth_motion = transforms;
  for (int k = 0; k < n_slices; ++k) {
    stack.slices[k] = slice_fn(stack.slice_geometry(k), transforms[k]);
    if (noise.sigma > 0.0) {
      Rng rng(mix_seed(noise.seed, 0xac40, static_cast<std::uint64_t>(k)));
      for (double& v : stack.slices[k].v) v += rng.normal(0.0, noise.sigma);
    }
  }
  return stack;
}

}  // namespace

Stack simulate_stack(const VoxelVolume& volume, const SliceGeometry& stack_geom,
                     int n_slices, const std::vector<RigidTransform>& transforms,
                     const PsfModel& psf, const NoiseModel& noise) {
  return simulate_stack_impl(stack_geom, n_slices, transforms, noise,
                             [&](const SliceGeometry& g, const RigidTransform& t) {
                               return forward_slice_volume(volume, g, t, psf);
                             });
}

Stack simulate_stack(const FieldView& field, const SliceGeometry& stack_geom,
                     int n_slices, const std::vector<RigidTransform>& transforms,
                     const PsfModel& psf, const NoiseModel& noise) {
  return simulate_stack_impl(stack_geom, n_slices, transforms, noise,
                             [&](const SliceGeometry& g, const RigidTransform& t) {
                               return forward_slice(field, g, t, psf);
                             });
}

Eigen::AlignedBox3d slice_union_bounds(const SliceStack& stacks, double margin_mm) {
  Eigen::AlignedBox3d box;
  for (const Stack& stack : stacks.stacks) {
    for (int k = 0; k < stack.num_slices(); ++k) {
      const SliceGeometry g = stack.slice_geometry(k);
      const double half_t = 0.5 * g.slice_thickness;
      for (int r : {0, g.rows - 1})
        for (int c : {0, g.cols - 1})
          for (double z : {-half_t, half_t})
            box.extend(map_slice_to_world(g, stack.motion[k], r, c, z));
    }
  }
  if (box.isEmpty()) throw ValidationError("slice_union_bounds: no slices");
  box.min() -= Vec3::Constant(margin_mm);
  box.max() += Vec3::Constant(margin_mm);
  return box;
}

}  // namespace gsvr
