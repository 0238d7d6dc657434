#include "gsvr/phantom.hpp"

#include <cmath>

namespace gsvr {

PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "gaussian-mixture") return PhantomKind::gaussian_mixture;
  if (s == "nested-ellipsoids") return PhantomKind::nested_ellipsoids;
  if (s == "checker-smooth") return PhantomKind::checker_smooth;
  throw ValidationError("unknown phantom kind: " + s);
}

std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::gaussian_mixture: return "gaussian-mixture";
    case PhantomKind::nested_ellipsoids: return "nested-ellipsoids";
    case PhantomKind::checker_smooth: return "checker-smooth";
  }
  return "?";
}

MotionModel motion_model_from_string(const std::string& s) {
  if (s == "independent") return MotionModel::independent;
  if (s == "random-walk") return MotionModel::random_walk;
  throw ValidationError("unknown motion model: " + s);
}

std::string to_string(MotionModel m) {
  return m == MotionModel::independent ? "independent" : "random-walk";
}

namespace {

GridSpec centered_grid(double spacing, const Eigen::Vector3i& dims) {
  GridSpec g;
  g.spacing = Vec3::Constant(spacing);
  g.dims = dims;
  g.origin = -0.5 * spacing * (dims - Eigen::Vector3i::Ones()).cast<double>();
  g.validate();
  return g;
}

Phantom make_gaussian_mixture(const PhantomParams& p, const GridSpec& grid, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6a11));
  const Vec3 half_extent = 0.5 * grid.spacing.cwiseProduct((grid.dims - Eigen::Vector3i::Ones()).cast<double>());
  GaussianSet set;
  for (int j = 0; j < p.mixture_count; ++j) {
    GaussianPrimitive g;
    // centers inside the middle ~80% so support stays inside the volume
    for (int a = 0; a < 3; ++a) g.center[a] = rng.uniform(-0.8, 0.8) * half_extent[a];
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = quat_normalized(q);
    for (int a = 0; a < 3; ++a)
      g.log_scales[a] = std::log(rng.uniform(p.mixture_scale_min_mm, p.mixture_scale_max_mm));
    g.intensity = rng.uniform(0.1, 1.0);
    set.push_back(g);
  }
  Eigen::AlignedBox3d bounds(grid.origin - Vec3::Constant(1.0),
                             grid.origin + grid.spacing.cwiseProduct(grid.dims.cast<double>()) +
                                 Vec3::Constant(1.0));
  SpatialIndex index = build_index(set, bounds, default_cell_size(set));
  VoxelVolume vol = rasterize_to_grid(set, index, grid);
  // normalize the peak to 1 and keep the exact set consistent with it
  float peak = 0.0f;
  for (float v : vol.data) peak = std::max(peak, v);
  if (peak > 0.0f) {
    const double inv = 1.0 / static_cast<double>(peak);
    for (double& i : set.intensities) i *= inv;
    index = build_index(set, bounds, default_cell_size(set));
    vol = rasterize_to_grid(set, index, grid);
  }
  Phantom ph;
  ph.kind = PhantomKind::gaussian_mixture;
  ph.volume = std::move(vol);
  ph.exact_set = std::move(set);
  ph.seed = seed;
  return ph;
}

Phantom make_nested_ellipsoids(const PhantomParams& p, const GridSpec& grid, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xe111));
  const Vec3 half_extent = 0.5 * grid.spacing.cwiseProduct((grid.dims - Eigen::Vector3i::Ones()).cast<double>());
  struct Ell {
    Vec3 center;
    Vec3 semi;
    double intensity;
  };
  std::vector<Ell> ells;
  double shrink = 1.0;
  for (int i = 0; i < p.ellipsoid_count; ++i) {
    Ell e;
    for (int a = 0; a < 3; ++a) {
      e.semi[a] = shrink * rng.uniform(0.5, 0.9) * half_extent[a];
      e.center[a] = i == 0 ? 0.0 : rng.uniform(-0.15, 0.15) * half_extent[a];
    }
    e.intensity = rng.uniform(0.2, 1.0);
    ells.push_back(e);
    shrink *= 0.6;
  }
  // soft edge of ~1.5 voxels keeps the target band-limited
  const double edge = 1.5 * grid.spacing.minCoeff();
  Phantom ph;
  ph.kind = PhantomKind::nested_ellipsoids;
  ph.volume = VoxelVolume::zeros(grid);
  for (int z = 0; z < grid.dims.z(); ++z)
    for (int y = 0; y < grid.dims.y(); ++y)
      for (int x = 0; x < grid.dims.x(); ++x) {
        const Vec3 pnt = grid.voxel_center(x, y, z);
        double v = 0.0;
        for (const Ell& e : ells) {
          // level-set distance approximation scaled by the smallest semi-axis
          const double level = ((pnt - e.center).cwiseQuotient(e.semi)).norm();
          const double dist = (level - 1.0) * e.semi.minCoeff();
          const double inside = 1.0 / (1.0 + std::exp(dist / (0.25 * edge)));
          v = v * (1.0 - inside) + e.intensity * inside;  // innermost wins
        }
        ph.volume.at(x, y, z) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  ph.seed = seed;
  return ph;
}

Phantom make_checker_smooth(const PhantomParams& p, const GridSpec& grid, std::uint64_t seed) {
  Phantom ph;
  ph.kind = PhantomKind::checker_smooth;
  ph.volume = VoxelVolume::zeros(grid);
  const double w = 2.0 * M_PI / p.checker_period_mm;
  for (int z = 0; z < grid.dims.z(); ++z)
    for (int y = 0; y < grid.dims.y(); ++y)
      for (int x = 0; x < grid.dims.x(); ++x) {
        const Vec3 pnt = grid.voxel_center(x, y, z);
        const double v = 0.5 + 0.5 * std::sin(w * pnt.x()) * std::sin(w * pnt.y()) * std::sin(w * pnt.z());
        ph.volume.at(x, y, z) = static_cast<float>(v);
      }
  ph.seed = seed;
  return ph;
}

}  // namespace

Phantom make_phantom(PhantomKind kind, const PhantomParams& params, double spacing_mm,
                     const Eigen::Vector3i& dims, std::uint64_t seed) {
  if (!(spacing_mm > 0.0)) throw ValidationError("phantom spacing must be positive");
  const GridSpec grid = centered_grid(spacing_mm, dims);
  switch (kind) {
    case PhantomKind::gaussian_mixture: return make_gaussian_mixture(params, grid, seed);
    case PhantomKind::nested_ellipsoids: return make_nested_ellipsoids(params, grid, seed);
    case PhantomKind::checker_smooth: return make_checker_smooth(params, grid, seed);
  }
  throw ValidationError("unknown phantom kind");
}

namespace {

Vec3 clamp_norm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  if (n > max_norm && n > 0.0) return v * (max_norm / n);
  return v;
}

}  // namespace

MotionTrajectory make_trajectory(int n_slices, const MotionAmplitude& amplitude,
                                 MotionModel model, std::uint64_t seed, double step_fraction) {
  if (n_slices < 1) throw ValidationError("make_trajectory: n_slices must be >= 1");
  if (amplitude.max_rot_deg < 0.0 || amplitude.max_trans_mm < 0.0)
    throw ValidationError("make_trajectory: amplitude must be non-negative");
  MotionTrajectory traj;
  traj.amplitude = amplitude;
  traj.model = model;
  traj.per_slice.resize(n_slices);
  const double max_rot = amplitude.max_rot_deg * M_PI / 180.0;
  const double max_trans = amplitude.max_trans_mm;
  Rng rng(mix_seed(seed, 0x7a37));

  if (model == MotionModel::independent) {
    for (int i = 0; i < n_slices; ++i) {
      Vec3 w(rng.uniform(-max_rot, max_rot), rng.uniform(-max_rot, max_rot),
             rng.uniform(-max_rot, max_rot));
      Vec3 t(rng.uniform(-max_trans, max_trans), rng.uniform(-max_trans, max_trans),
             rng.uniform(-max_trans, max_trans));
      traj.per_slice[i].q = quat_from_axis_angle(clamp_norm(w, max_rot));
      traj.per_slice[i].t = clamp_norm(t, max_trans);
    }
  } else {
    const double step_rot = step_fraction * max_rot;
    const double step_trans = step_fraction * max_trans;
    Vec3 w = Vec3::Zero(), t = Vec3::Zero();
    for (int i = 0; i < n_slices; ++i) {
      Vec3 dw(rng.uniform(-step_rot, step_rot), rng.uniform(-step_rot, step_rot),
              rng.uniform(-step_rot, step_rot));
      Vec3 dt(rng.uniform(-step_trans, step_trans), rng.uniform(-step_trans, step_trans),
              rng.uniform(-step_trans, step_trans));
      w = clamp_norm(w + clamp_norm(dw, step_rot), max_rot);
      t = clamp_norm(t + clamp_norm(dt, step_trans), max_trans);
      traj.per_slice[i].q = quat_from_axis_angle(w);
      traj.per_slice[i].t = t;
    }
  }
  return traj;
}

void Protocol::validate() const {
  if (n_stacks < 1) throw ValidationError("protocol.n_stacks must be >= 1");
  if (rows < 1 || cols < 1) throw ValidationError("protocol slice size must be >= 1");
  if (!(in_plane_mm > 0.0)) throw ValidationError("protocol.in_plane_mm must be positive");
  if (!(thickness_min_mm > 0.0) || thickness_max_mm < thickness_min_mm)
    throw ValidationError("protocol thickness range invalid");
  if (!(gap_factor > 0.0)) throw ValidationError("protocol.gap_factor must be positive");
  for (int a = 0; a < 3; ++a)
    if (psf_samples[a] < 1 || psf_samples[a] % 2 == 0)
      throw ValidationError("protocol.psf_samples must be odd");
  if (noise_sigma < 0.0) throw ValidationError("protocol.noise_sigma must be >= 0");
}

Protocol paper_protocol() { return Protocol{}; }

Protocol desk_protocol() {
  Protocol p;
  p.rows = 48;
  p.cols = 48;
  p.in_plane_mm = 2.0;
  p.thickness_min_mm = 4.0;
  p.thickness_max_mm = 4.0;
  p.slices_per_stack = 20;
  p.psf_samples = Eigen::Vector3i(1, 1, 3);
  return p;
}

Protocol tiny_protocol() {
  Protocol p;
  p.rows = 24;
  p.cols = 24;
  p.in_plane_mm = 3.0;
  p.thickness_min_mm = 5.0;
  p.thickness_max_mm = 5.0;
  p.slices_per_stack = 8;
  p.psf_samples = Eigen::Vector3i(1, 1, 3);
  return p;
}

CaseBundle make_benchmark_case(const Phantom& phantom, const Protocol& protocol,
                               const MotionAmplitude& amplitude, MotionModel model,
                               std::uint64_t seed) {
  protocol.validate();
  CaseBundle bundle;
  bundle.phantom = phantom;
  bundle.truth_volume = phantom.volume;
  bundle.protocol = protocol;
  bundle.amplitude = amplitude;
  bundle.motion_model = model;
  bundle.seed = seed;

  const GridSpec& grid = phantom.volume.grid;
  const Vec3 extent = grid.spacing.cwiseProduct(grid.dims.cast<double>());
  const Vec3 center = grid.origin + 0.5 * grid.spacing.cwiseProduct(
                                        (grid.dims - Eigen::Vector3i::Ones()).cast<double>());

  // Orthogonal slab orientations: slice normal along world z, y, x.
  const Vec4 orientations[3] = {
      quat_identity(),
      quat_from_axis_angle(Vec3(M_PI / 2.0, 0, 0)),  // normal -> y
      quat_from_axis_angle(Vec3(0, M_PI / 2.0, 0)),  // normal -> x
  };

  Rng rng(mix_seed(seed, 0xca5e));
  for (int s = 0; s < protocol.n_stacks; ++s) {
    SliceGeometry geom;
    geom.in_plane_spacing = Eigen::Vector2d(protocol.in_plane_mm, protocol.in_plane_mm);
    geom.rows = protocol.rows;
    geom.cols = protocol.cols;
    geom.slice_thickness = protocol.thickness_min_mm == protocol.thickness_max_mm
                               ? protocol.thickness_min_mm
                               : rng.uniform(protocol.thickness_min_mm, protocol.thickness_max_mm);
    geom.slice_gap = protocol.gap_factor * geom.slice_thickness;
    geom.nominal_pose.q = orientations[s % 3];
    geom.nominal_pose.t = center;

    int n_slices = protocol.slices_per_stack;
    if (n_slices <= 0) {
      const double coverage = extent[2 - (s % 3)];
      n_slices = std::clamp(static_cast<int>(std::lround(coverage / geom.slice_gap)), 15, 30);
    }

    MotionTrajectory traj = make_trajectory(
        n_slices, amplitude, model, mix_seed(seed, 0x70a7, static_cast<std::uint64_t>(s)));

    const PsfModel psf = build_psf(geom, protocol.psf_samples, protocol.psf_inplane_factor,
                                   protocol.psf_thickness_factor);
    NoiseModel noise;
    noise.sigma = protocol.noise_sigma;
    noise.seed = mix_seed(seed, 0x401e, static_cast<std::uint64_t>(s));
    Stack stack = simulate_stack(phantom.volume, geom, n_slices, traj.per_slice, psf, noise);
    stack.id = s;
    bundle.stacks.stacks.push_back(std::move(stack));
  }
  return bundle;
}

}  // namespace gsvr
