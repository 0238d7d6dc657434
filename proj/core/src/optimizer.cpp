#include "gsvr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gsvr/formats.hpp"

namespace gsvr {

static_assert(sizeof(Vec3) == 3 * sizeof(double) && sizeof(Vec4) == 4 * sizeof(double),
              "parameter arrays must be densely packed");

void adam_step(double* params, const double* grads, std::size_t n, AdamState& state,
               double lr, const AdamSpec& spec) {
  if (state.m.size() != n) state.resize(n);
  ++state.step;
  const double bc1 = 1.0 - std::pow(spec.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(spec.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = spec.beta1 * state.m[i] + (1.0 - spec.beta1) * g;
    state.v[i] = spec.beta2 * state.v[i] + (1.0 - spec.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + spec.epsilon);
  }
}

double lr_schedule(ParamGroup group, const LrSpec& lr, long global_iter, long total_iters) {
  switch (group) {
    case ParamGroup::center: {
      if (total_iters <= 1) return lr.mu_start;
      const double t = static_cast<double>(global_iter) / static_cast<double>(total_iters - 1);
      return lr.mu_start * std::pow(lr.mu_end / lr.mu_start, t);
    }
    case ParamGroup::intensity: return lr.intensity;
    case ParamGroup::scale: return lr.scale;
    case ParamGroup::rotation: return lr.rotation;
    case ParamGroup::slice_translation: return lr.translation;
    case ParamGroup::slice_rotation: return lr.slice_rotation;
  }
  return 0.0;
}

GaussianSet init_gaussians(const SliceStack& stacks, std::size_t budget, InitMode mode) {
  if (mode != InitMode::grid_backproject)
    throw ValidationError("init_gaussians only implements grid-backproject; pass provided sets to reconstruct");
  if (budget < 8) throw ValidationError("init_gaussians: budget must be >= 8");
  if (stacks.stacks.empty()) throw ValidationError("init_gaussians: empty stacks");

  const Eigen::AlignedBox3d bounds = slice_union_bounds(stacks, 0.0);
  const Vec3 extent = bounds.max() - bounds.min();
  const double volume = extent.prod();
  const double h = std::cbrt(volume / static_cast<double>(budget));
  Eigen::Vector3i n;
  Vec3 spacing;
  for (int a = 0; a < 3; ++a) {
    n[a] = std::max(1, static_cast<int>(std::lround(extent[a] / h)));
    spacing[a] = extent[a] / n[a];
  }
  const double scale = 0.75 * spacing.mean();

  GaussianSet set;
  const std::size_t count = static_cast<std::size_t>(n.x()) * n.y() * n.z();
  set.centers.reserve(count);
  for (int z = 0; z < n.z(); ++z)
    for (int y = 0; y < n.y(); ++y)
      for (int x = 0; x < n.x(); ++x) {
        GaussianPrimitive g;
        g.center = bounds.min() + spacing.cwiseProduct(Vec3(x + 0.5, y + 0.5, z + 0.5));
        g.log_scales = Vec3::Constant(std::log(scale));
        set.push_back(g);
      }

  // intensity seed: mean of the nearest acquired sample from every slice
  // whose thickness band contains the center
  parallel_chunks(set.size(), 64, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      double sum = 0.0;
      int hits = 0;
      for (const Stack& stack : stacks.stacks) {
        for (int k = 0; k < stack.num_slices(); ++k) {
          const SliceGeometry geom = stack.slice_geometry(k);
          const Vec3 local = world_to_slice_local(geom, stack.motion[k], set.centers[j]);
          if (std::abs(local.z()) > 0.5 * geom.slice_thickness) continue;
          const long col = std::lround(local.x() / geom.in_plane_spacing.x() + 0.5 * (geom.cols - 1));
          const long row = std::lround(local.y() / geom.in_plane_spacing.y() + 0.5 * (geom.rows - 1));
          if (col < 0 || row < 0 || col >= geom.cols || row >= geom.rows) continue;
          sum += stack.slices[k].at(static_cast<int>(row), static_cast<int>(col));
          ++hits;
        }
      }
      set.intensities[j] = hits > 0 ? sum / hits : 0.0;
    }
  });
  return set;
}

namespace {

Eigen::AlignedBox3d geometry_bounds(const std::vector<SliceGeometry>& geoms,
                                    const std::vector<RigidTransform>& transforms,
                                    double margin) {
  Eigen::AlignedBox3d box;
  for (std::size_t i = 0; i < geoms.size(); ++i) {
    const SliceGeometry& g = geoms[i];
    const double half_t = 0.5 * g.slice_thickness;
    for (int r : {0, g.rows - 1})
      for (int c : {0, g.cols - 1})
        for (double z : {-half_t, half_t})
          box.extend(map_slice_to_world(g, transforms[i], r, c, z));
  }
  box.min() -= Vec3::Constant(margin);
  box.max() += Vec3::Constant(margin);
  return box;
}

}  // namespace

GaussianSet stage_transition(const GaussianSet& set,
                             const std::vector<SliceGeometry>& slice_geoms,
                             const std::vector<const Image2D*>& acquired,
                             const std::vector<RigidTransform>& transforms,
                             const std::vector<const PsfModel*>& psf_per_slice,
                             std::size_t new_budget) {
  GaussianSet out = set;
  if (new_budget <= set.size() || slice_geoms.empty()) return out;
  const std::size_t want = new_budget - set.size();

  double max_radius = 1.0;
  for (std::size_t j = 0; j < set.size(); ++j)
    max_radius = std::max(max_radius, set.support_radius(j));
  const Eigen::AlignedBox3d bounds = geometry_bounds(slice_geoms, transforms, max_radius);
  FieldCache cache;
  cache.rebuild(set);
  SpatialIndex index = build_index(set, bounds, default_cell_size(set));
  const FieldView field{&cache, &index};

  struct Candidate {
    double abs_res;
    double res;
    Vec3 world;
    std::size_t order;  // deterministic tie-break
  };
  std::vector<Candidate> cands;
  std::size_t order = 0;
  for (std::size_t i = 0; i < slice_geoms.size(); ++i) {
    const Image2D pred = forward_slice(field, slice_geoms[i], transforms[i], *psf_per_slice[i]);
    for (int r = 0; r < pred.rows; ++r)
      for (int c = 0; c < pred.cols; ++c) {
        const double res = acquired[i]->at(r, c) - pred.at(r, c);
        cands.push_back({std::abs(res), res,
                         map_slice_to_world(slice_geoms[i], transforms[i], r, c, 0.0), order++});
      }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.abs_res != b.abs_res) return a.abs_res > b.abs_res;
    return a.order < b.order;
  });

  const Vec3 extent = bounds.max() - bounds.min();
  const double h_new = std::cbrt(extent.prod() / static_cast<double>(new_budget));
  const double separation = 0.5 * h_new;

  // hash accepted positions on a lattice of the separation length
  struct CellKey {
    long x, y, z;
    bool operator<(const CellKey& o) const {
      return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
    }
  };
  std::map<CellKey, std::vector<Vec3>> accepted;
  auto key_of = [&](const Vec3& p) {
    return CellKey{static_cast<long>(std::floor(p.x() / separation)),
                   static_cast<long>(std::floor(p.y() / separation)),
                   static_cast<long>(std::floor(p.z() / separation))};
  };
  auto too_close = [&](const Vec3& p) {
    const CellKey k = key_of(p);
    for (long dz = -1; dz <= 1; ++dz)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          auto it = accepted.find(CellKey{k.x + dx, k.y + dy, k.z + dz});
          if (it == accepted.end()) continue;
          for (const Vec3& q : it->second)
            if ((p - q).squaredNorm() < separation * separation) return true;
        }
    return false;
  };

  std::size_t inserted = 0;
  for (const Candidate& cand : cands) {
    if (inserted >= want) break;
    if (too_close(cand.world)) continue;
    GaussianPrimitive g;
    g.center = cand.world;
    g.intensity = cand.res;
    // local scale: copy the nearest existing primitive
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::uint32_t j : index.query(cand.world)) {
      const double d2 = (set.centers[j] - cand.world).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_j = j;
      }
    }
    if (!std::isfinite(best_d2)) {
      for (std::size_t j = 0; j < set.size(); ++j) {
        const double d2 = (set.centers[j] - cand.world).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best_j = j;
        }
      }
    }
    g.log_scales = set.size() > 0 ? set.log_scales[best_j] : Vec3::Constant(std::log(h_new));
    out.push_back(g);
    accepted[key_of(cand.world)].push_back(cand.world);
    ++inserted;
  }
  return out;
}

namespace {

Image2D downsample(const Image2D& img, int f) {
  if (f == 1) return img;
  if (img.rows % f != 0 || img.cols % f != 0)
    throw ValidationError("stage resolution factor must divide the slice dimensions");
  Image2D out(img.rows / f, img.cols / f);
  const double inv = 1.0 / (f * f);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < f; ++dr)
        for (int dc = 0; dc < f; ++dc) acc += img.at(f * r + dr, f * c + dc);
      out.at(r, c) = acc * inv;
    }
  return out;
}

// Flattened stack-major view of all slices at one stage resolution.
struct StageSlices {
  std::vector<SliceGeometry> geoms;
  std::vector<Image2D> acquired;
  std::vector<int> stack_of;
  std::vector<int> slice_of;
  std::vector<PsfModel> psf_storage;  // per stack
  std::vector<const PsfModel*> psf;   // per flat slice

  int count() const { return static_cast<int>(geoms.size()); }
};

StageSlices make_stage_slices(const SliceStack& stacks, int factor, const PsfSpec& spec) {
  StageSlices out;
  for (std::size_t s = 0; s < stacks.stacks.size(); ++s) {
    const Stack& stack = stacks.stacks[s];
    SliceGeometry coarse = stack.geom;
    if (factor > 1) {
      if (stack.geom.rows % factor != 0 || stack.geom.cols % factor != 0)
        throw ValidationError("stage resolution factor must divide the slice dimensions");
      coarse.rows = stack.geom.rows / factor;
      coarse.cols = stack.geom.cols / factor;
      coarse.in_plane_spacing = stack.geom.in_plane_spacing * factor;
    }
    out.psf_storage.push_back(
        build_psf(coarse, spec.samples, spec.inplane_fwhm_factor, spec.thickness_fwhm_factor));
    for (int k = 0; k < stack.num_slices(); ++k) {
      SliceGeometry g = coarse;
      const double z = (k - 0.5 * (stack.num_slices() - 1)) * stack.geom.slice_gap;
      g.nominal_pose.t =
          stack.geom.nominal_pose.t + quat_rotate(stack.geom.nominal_pose.q, Vec3(0, 0, z));
      out.geoms.push_back(g);
      out.acquired.push_back(downsample(stack.slices[k], factor));
      out.stack_of.push_back(static_cast<int>(s));
      out.slice_of.push_back(k);
    }
  }
  for (int i = 0; i < out.count(); ++i) out.psf.push_back(&out.psf_storage[out.stack_of[i]]);
  return out;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) return 1.0;
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  auto it = values.begin() + lo;
  std::nth_element(values.begin(), it, values.end());
  return *it;
}

struct MotionState {
  std::vector<RigidTransform> bases;  // flat slice order
  std::vector<double> rot;            // 3 per slice, chart increments
  std::vector<double> trans;          // 3 per slice

  RigidTransform current(int i) const {
    MotionParams p;
    p.axis_angle = Vec3(rot[3 * i], rot[3 * i + 1], rot[3 * i + 2]);
    p.translation = Vec3(trans[3 * i], trans[3 * i + 1], trans[3 * i + 2]);
    return exp_update(bases[i], p);
  }
  void recenter() {
    for (std::size_t i = 0; i < bases.size(); ++i) {
      bases[i] = current(static_cast<int>(i));
      std::fill(rot.begin() + 3 * i, rot.begin() + 3 * i + 3, 0.0);
      std::fill(trans.begin() + 3 * i, trans.begin() + 3 * i + 3, 0.0);
    }
  }
};

struct Snapshot {
  GaussianSet set;
  MotionState motion;
  std::vector<AdamState> adam;
  long step_count = 0;
};

double* flat(std::vector<Vec3>& v) { return v.empty() ? nullptr : v[0].data(); }
double* flat4(std::vector<Vec4>& v) { return v.empty() ? nullptr : v[0].data(); }
const double* flat(const std::vector<Vec3>& v) { return v.empty() ? nullptr : v[0].data(); }
const double* flat4(const std::vector<Vec4>& v) { return v.empty() ? nullptr : v[0].data(); }

}  // namespace

ReconResult reconstruct(const SliceStack& input, const ReconConfig& cfg, std::ostream* run_log,
                        const std::filesystem::path& checkpoint_dir,
                        const GaussianSet* provided_init) {
  cfg.validate();
  input.validate();
  if (input.stacks.empty()) throw ValidationError("reconstruct: no stacks");

  SliceStack stacks = input;

  // transform initialization
  Rng init_rng(mix_seed(cfg.seed, 0x1217));
  for (Stack& stack : stacks.stacks) {
    switch (cfg.transform_init) {
      case TransformInit::nominal:
        std::fill(stack.motion.begin(), stack.motion.end(), RigidTransform::identity());
        break;
      case TransformInit::as_loaded:
        break;
      case TransformInit::oracle_perturbed: {
        if (stack.truth_motion.empty())
          throw ValidationError("transforms.init = oracle-perturbed requires ground-truth transforms");
        for (std::size_t k = 0; k < stack.motion.size(); ++k) {
          MotionParams noise;
          const double rot_amp = cfg.oracle_noise_rot_deg * M_PI / 180.0;
          noise.axis_angle = Vec3(init_rng.uniform(-rot_amp, rot_amp),
                                  init_rng.uniform(-rot_amp, rot_amp),
                                  init_rng.uniform(-rot_amp, rot_amp));
          noise.translation = Vec3(init_rng.uniform(-cfg.oracle_noise_trans_mm, cfg.oracle_noise_trans_mm),
                                   init_rng.uniform(-cfg.oracle_noise_trans_mm, cfg.oracle_noise_trans_mm),
                                   init_rng.uniform(-cfg.oracle_noise_trans_mm, cfg.oracle_noise_trans_mm));
          stack.motion[k] = exp_update(stack.truth_motion[k], noise);
        }
        break;
      }
    }
  }

  // per-subject normalization: the configured percentile maps to 1
  double norm = 1.0;
  {
    std::vector<double> values;
    for (const Stack& stack : stacks.stacks)
      for (const Image2D& img : stack.slices) values.insert(values.end(), img.v.begin(), img.v.end());
    const double p = percentile(std::move(values), cfg.normalize_percentile);
    if (p > 0.0) norm = p;
  }
  for (Stack& stack : stacks.stacks)
    for (Image2D& img : stack.slices)
      for (double& v : img.v) v /= norm;

  ReconResult result;
  result.intensity_scale = norm * input.intensity_scale;

  // reconstruction lattice for TV crops and export
  {
    double spacing = cfg.recon_spacing_mm;
    if (spacing <= 0.0) {
      spacing = std::numeric_limits<double>::infinity();
      for (const Stack& stack : stacks.stacks)
        spacing = std::min(spacing, stack.geom.in_plane_spacing.minCoeff());
    }
    double max_thickness = 0.0;
    for (const Stack& stack : stacks.stacks)
      max_thickness = std::max(max_thickness, stack.geom.slice_thickness);
    const Eigen::AlignedBox3d box = slice_union_bounds(stacks, max_thickness);
    const Vec3 extent = box.max() - box.min();
    result.recon_grid.origin = box.min();
    result.recon_grid.spacing = Vec3::Constant(spacing);
    for (int a = 0; a < 3; ++a)
      result.recon_grid.dims[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / spacing)));
  }

  // gaussian initialization
  GaussianSet set;
  if (provided_init) {
    set = *provided_init;
  } else if (cfg.init_mode == InitMode::provided) {
    set = read_gaussians(cfg.init_path);
  } else {
    set = init_gaussians(stacks, cfg.stages.front().budget);
  }
  const double log_min = std::log(cfg.scale_min_mm);
  const double log_max = std::log(cfg.scale_max_mm);
  for (std::size_t j = 0; j < set.size(); ++j) {
    set.rotations[j] /= set.rotations[j].norm();
    for (int a = 0; a < 3; ++a)
      set.log_scales[j][a] = std::clamp(set.log_scales[j][a], log_min, log_max);
  }

  long total_iters = 0;
  for (const StageSpec& st : cfg.stages) total_iters += st.iterations;

  if (run_log) {
    *run_log << "# gsvr run log\n";
    *run_log << "config.begin\n" << serialize_recon_config(cfg) << "config.end\n";
    *run_log << "intensity_scale = " << result.intensity_scale << "\n";
  }

  const int n_slices_total = stacks.total_slices();
  MotionState motion;
  motion.rot.assign(3 * n_slices_total, 0.0);
  motion.trans.assign(3 * n_slices_total, 0.0);
  {
    for (const Stack& stack : stacks.stacks)
      for (const RigidTransform& t : stack.motion) motion.bases.push_back(t);
  }

  long global_iter = 0;
  Rng crop_rng(mix_seed(cfg.seed, 0xc209));

  auto write_checkpoint = [&](const std::string& tag, const StageSlices& ss,
                              const std::vector<AdamState>& adam) {
    if (checkpoint_dir.empty()) return;
    std::filesystem::create_directories(checkpoint_dir);
    write_gaussians(checkpoint_dir / (tag + ".ggau"), set, result.intensity_scale);
    std::vector<SidecarEntry> entries;
    for (int i = 0; i < ss.count(); ++i)
      entries.push_back({stacks.stacks[ss.stack_of[i]].id, ss.slice_of[i], motion.current(i)});
    write_sidecar(checkpoint_dir / (tag + ".transforms.txt"), entries);
    write_adam_blob(checkpoint_dir / (tag + ".adam"), adam);
  };

  for (std::size_t stage_idx = 0; stage_idx < cfg.stages.size(); ++stage_idx) {
    const StageSpec& stage = cfg.stages[stage_idx];
    StageSlices ss = make_stage_slices(stacks, stage.resolution_factor, cfg.psf);
    const int n_slices = ss.count();
    const double inv_n = 1.0 / static_cast<double>(n_slices);

    std::vector<RigidTransform> current(n_slices);
    for (int i = 0; i < n_slices; ++i) current[i] = motion.current(i);

    if (stage_idx > 0 && stage.budget > set.size()) {
      std::vector<const Image2D*> acq(n_slices);
      for (int i = 0; i < n_slices; ++i) acq[i] = &ss.acquired[i];
      set = stage_transition(set, ss.geoms, acq, current, ss.psf, stage.budget);
    }
    const std::size_t n_gauss = set.size();

    // stage-level field acceleration structures
    double max_thickness = 0.0;
    for (const Stack& stack : stacks.stacks)
      max_thickness = std::max(max_thickness, stack.geom.slice_thickness);
    const Eigen::AlignedBox3d stage_bounds =
        geometry_bounds(ss.geoms, current, 2.0 * max_thickness);
    double cell = default_cell_size(set);
    FieldCache cache;
    SpatialIndex index = build_index(set, stage_bounds, cell);

    // fresh optimizer state per stage: 0 centers, 1 rotations, 2 scales,
    // 3 intensities, 4 slice rotations, 5 slice translations
    std::vector<AdamState> adam(6);
    adam[0].resize(3 * n_gauss);
    adam[1].resize(4 * n_gauss);
    adam[2].resize(3 * n_gauss);
    adam[3].resize(n_gauss);
    adam[4].resize(motion.rot.size());
    adam[5].resize(motion.trans.size());

    GaussianGrads grads;
    grads.resize(n_gauss);
    std::vector<double> grot(motion.rot.size(), 0.0);
    std::vector<double> gtrans(motion.trans.size(), 0.0);

    Snapshot snapshot{set, motion, adam, 0};
    int retries = 0;
    double lr_scale = 1.0;
    std::vector<double> loss_history;
    std::vector<Image2D> recon(n_slices);
    std::vector<Image2D> upstream(n_slices);

    long it = 0;
    for (; it < stage.iterations; ++it, ++global_iter) {
      cache.rebuild(set);
      if (index_needs_rebuild(index, set)) index = build_index(set, stage_bounds, cell);
      const FieldView field{&cache, &index};

      for (int i = 0; i < n_slices; ++i) current[i] = motion.current(i);
      for (int i = 0; i < n_slices; ++i)
        recon[i] = forward_slice(field, ss.geoms[i], current[i], *ss.psf[i]);

      // deterministic TV crop for this iteration
      GridSpec crop = result.recon_grid;
      if (!cfg.loss.tv_full_grid) {
        for (int a = 0; a < 3; ++a) {
          const int c = std::min(cfg.loss.tv_crop[a], result.recon_grid.dims[a]);
          const int max_off = result.recon_grid.dims[a] - c;
          const int off = max_off > 0 ? static_cast<int>(crop_rng.uniform_int(0, max_off)) : 0;
          crop.dims[a] = c;
          crop.origin[a] = result.recon_grid.origin[a] + off * crop.spacing[a];
        }
      }
      DenseGrid crop_vol = rasterize_dense(cache, index, crop);
      DenseGrid tv_grad;
      const double tv = tv_loss(crop_vol, &tv_grad);

      // per-slice losses and upstream gradients
      double l1_sum = 0.0, dssim_sum = 0.0;
      for (int i = 0; i < n_slices; ++i) {
        Image2D g1, g2;
        const double l1 = l1_loss(ss.acquired[i], recon[i], &g1);
        const double ds = dssim_loss(ss.acquired[i], recon[i], cfg.loss, &g2);
        l1_sum += l1;
        dssim_sum += ds;
        upstream[i] = Image2D(recon[i].rows, recon[i].cols);
        for (std::size_t p = 0; p < upstream[i].v.size(); ++p)
          upstream[i].v[p] = inv_n * (g1.v[p] + cfg.loss.lambda1 * g2.v[p]);
      }
      const double total =
          l1_sum * inv_n + cfg.loss.lambda1 * (dssim_sum * inv_n) + cfg.loss.lambda2 * tv;

      const double lr_mu =
          lr_scale * lr_schedule(ParamGroup::center, cfg.lr, global_iter, total_iters);
      result.trace.push_back({global_iter, static_cast<int>(stage_idx), total, l1_sum * inv_n,
                              dssim_sum * inv_n, tv, lr_mu});
      if (run_log)
        *run_log << "iter=" << global_iter << " stage=" << stage_idx << " total=" << total
                 << " l1=" << l1_sum * inv_n << " dssim=" << dssim_sum * inv_n << " tv=" << tv
                 << " lr_mu=" << lr_mu << "\n";

      if (!std::isfinite(total)) {
        if (retries >= cfg.divergence_retries)
          throw DivergedError(global_iter, "non-finite loss at iteration " +
                                               std::to_string(global_iter));
        set = snapshot.set;
        motion = snapshot.motion;
        adam = snapshot.adam;
        lr_scale *= 0.5;
        ++retries;
        continue;
      }
      snapshot.set = set;
      snapshot.motion = motion;
      snapshot.adam = adam;

      // backward
      grads.set_zero();
      std::fill(grot.begin(), grot.end(), 0.0);
      std::fill(gtrans.begin(), gtrans.end(), 0.0);
      for (int i = 0; i < n_slices; ++i) {
        const Vec6 zero_chart =
            forward_slice_backward(field, ss.geoms[i], current[i], *ss.psf[i], upstream[i], grads);
        // chart correction: params are increments about the stage base
        const Vec3 omega(motion.rot[3 * i], motion.rot[3 * i + 1], motion.rot[3 * i + 2]);
        const Vec3 grot_i = so3_left_jacobian(omega).transpose() * zero_chart.head<3>();
        for (int a = 0; a < 3; ++a) {
          grot[3 * i + a] = grot_i[a];
          gtrans[3 * i + a] = zero_chart[3 + a];
        }
      }
      {
        std::vector<Vec3> crop_points(crop.voxel_count());
        std::vector<double> crop_upstream(crop.voxel_count());
        for (int z = 0; z < crop.dims.z(); ++z)
          for (int y = 0; y < crop.dims.y(); ++y)
            for (int x = 0; x < crop.dims.x(); ++x) {
              const std::size_t idx = crop.index(x, y, z);
              crop_points[idx] = crop.voxel_center(x, y, z);
              crop_upstream[idx] = cfg.loss.lambda2 * tv_grad.data[idx];
            }
        eval_volume_backward(cache, index, crop_points, crop_upstream, grads);
      }

      // parameter updates, fixed group order
      adam_step(flat(set.centers), flat(grads.centers), 3 * n_gauss, adam[0], lr_mu, cfg.adam);
      adam_step(flat4(set.rotations), flat4(grads.rotations), 4 * n_gauss, adam[1],
                lr_scale * lr_schedule(ParamGroup::rotation, cfg.lr, global_iter, total_iters),
                cfg.adam);
      adam_step(flat(set.log_scales), flat(grads.log_scales), 3 * n_gauss, adam[2],
                lr_scale * lr_schedule(ParamGroup::scale, cfg.lr, global_iter, total_iters),
                cfg.adam);
      adam_step(set.intensities.data(), grads.intensities.data(), n_gauss, adam[3],
                lr_scale * lr_schedule(ParamGroup::intensity, cfg.lr, global_iter, total_iters),
                cfg.adam);
      if (!cfg.freeze_transforms) {
        adam_step(motion.rot.data(), grot.data(), grot.size(), adam[4],
                  lr_scale *
                      lr_schedule(ParamGroup::slice_rotation, cfg.lr, global_iter, total_iters),
                  cfg.adam);
        adam_step(motion.trans.data(), gtrans.data(), gtrans.size(), adam[5],
                  lr_scale *
                      lr_schedule(ParamGroup::slice_translation, cfg.lr, global_iter, total_iters),
                  cfg.adam);
      }
      for (std::size_t j = 0; j < n_gauss; ++j) {
        set.rotations[j] /= set.rotations[j].norm();
        for (int a = 0; a < 3; ++a)
          set.log_scales[j][a] = std::clamp(set.log_scales[j][a], log_min, log_max);
      }

      if (cfg.checkpoint_every > 0 && (global_iter + 1) % cfg.checkpoint_every == 0)
        write_checkpoint("checkpoint", ss, adam);

      // optional early stop on a stalled moving average
      loss_history.push_back(total);
      if (cfg.convergence_min_rel_improvement > 0.0) {
        const int w = cfg.convergence_window;
        if (static_cast<long>(loss_history.size()) >= 2 * w &&
            loss_history.size() % static_cast<std::size_t>(w) == 0) {
          double prev = 0.0, last = 0.0;
          for (int i = 0; i < w; ++i) {
            prev += loss_history[loss_history.size() - 2 * w + i];
            last += loss_history[loss_history.size() - w + i];
          }
          const double rel = (prev - last) / std::max(std::abs(prev), 1e-300);
          if (rel < cfg.convergence_min_rel_improvement) {
            ++it;
            ++global_iter;
            break;
          }
        }
      }
    }

    // skip unused schedule so the mu decay stays tied to the plan
    global_iter += stage.iterations - it;

    motion.recenter();
    if (run_log)
      *run_log << "stage_end stage=" << stage_idx << " iterations=" << it
               << " gaussians=" << set.size() << "\n";
    write_checkpoint("stage" + std::to_string(stage_idx), ss, adam);
    result.iterations_run += it;
    result.divergence_restores += retries;
  }

  result.set = std::move(set);
  result.motion.resize(stacks.stacks.size());
  {
    int flat_i = 0;
    for (std::size_t s = 0; s < stacks.stacks.size(); ++s) {
      result.motion[s].resize(stacks.stacks[s].num_slices());
      for (int k = 0; k < stacks.stacks[s].num_slices(); ++k, ++flat_i)
        result.motion[s][k] = motion.bases[flat_i];
    }
  }
  if (run_log) *run_log << "done iterations=" << result.iterations_run << "\n";
  return result;
}

void write_adam_blob(const std::filesystem::path& path, const std::vector<AdamState>& states) {
  std::string bytes;
  bytes.append("GADM", 4);
  const std::uint32_t version = kFormatVersion;
  bytes.append(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t n_states = states.size();
  bytes.append(reinterpret_cast<const char*>(&n_states), 8);
  for (const AdamState& st : states) {
    const std::uint64_t n = st.m.size();
    const std::int64_t step = st.step;
    bytes.append(reinterpret_cast<const char*>(&n), 8);
    bytes.append(reinterpret_cast<const char*>(&step), 8);
    bytes.append(reinterpret_cast<const char*>(st.m.data()), n * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(st.v.data()), n * sizeof(double));
  }
  atomic_write(path, bytes);
}

std::vector<AdamState> read_adam_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "GADM", 4) != 0)
    throw FileFormatError(FormatError::bad_magic, "bad adam blob: " + path.string());
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kFormatVersion)
    throw FileFormatError(FormatError::unsupported_version, "unsupported adam blob version");
  std::uint64_t n_states;
  std::memcpy(&n_states, bytes.data() + 8, 8);
  if (n_states > 1024)
    throw FileFormatError(FormatError::bad_value, "implausible adam state count");
  std::size_t off = 16;
  std::vector<AdamState> states(n_states);
  for (auto& st : states) {
    if (bytes.size() < off + 16)
      throw FileFormatError(FormatError::truncated_payload, "truncated adam blob");
    std::uint64_t n;
    std::int64_t step;
    std::memcpy(&n, bytes.data() + off, 8);
    std::memcpy(&step, bytes.data() + off + 8, 8);
    off += 16;
    if (n > (1ull << 31) || bytes.size() < off + 2 * n * sizeof(double))
      throw FileFormatError(FormatError::truncated_payload, "truncated adam blob payload");
    st.step = step;
    st.m.resize(n);
    st.v.resize(n);
    std::memcpy(st.m.data(), bytes.data() + off, n * sizeof(double));
    off += n * sizeof(double);
    std::memcpy(st.v.data(), bytes.data() + off, n * sizeof(double));
    off += n * sizeof(double);
  }
  if (off != bytes.size())
    throw FileFormatError(FormatError::size_mismatch, "adam blob size mismatch");
  return states;
}

}  // namespace gsvr
