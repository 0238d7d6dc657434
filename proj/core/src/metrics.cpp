#include "gsvr/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gsvr/acquisition.hpp"

namespace gsvr {

namespace {

void check_same_grid(const VoxelVolume& a, const VoxelVolume& b) {
  if (a.grid.dims != b.grid.dims)
    throw ValidationError("metric: volume dims mismatch");
}

double masked_mse(const VoxelVolume& ref, const VoxelVolume& test,
                  const std::vector<std::uint8_t>* mask) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double d = static_cast<double>(ref.data[i]) - static_cast<double>(test.data[i]);
    acc += d * d;
    ++count;
  }
  if (count == 0) throw ValidationError("metric: empty mask");
  return acc / static_cast<double>(count);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    auto lo = std::max_element(v.begin(), mid);
    m = 0.5 * (m + *lo);
  }
  return m;
}

}  // namespace

double psnr(const VoxelVolume& ref, const VoxelVolume& test, double peak,
            const std::vector<std::uint8_t>* mask) {
  check_same_grid(ref, test);
  if (!(peak > 0.0)) throw ValidationError("psnr: peak must be positive");
  const double mse = masked_mse(ref, test, mask);
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double nrmse(const VoxelVolume& ref, const VoxelVolume& test,
             const std::vector<std::uint8_t>* mask) {
  check_same_grid(ref, test);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    lo = std::min(lo, static_cast<double>(ref.data[i]));
    hi = std::max(hi, static_cast<double>(ref.data[i]));
  }
  const double range = hi - lo;
  if (!(range > 0.0)) throw ValidationError("nrmse: reference intensity range is zero");
  return std::sqrt(masked_mse(ref, test, mask)) / range;
}

namespace {

// 1D same-size convolution along one axis of a volume, zero padding.
std::vector<double> conv_axis(const std::vector<double>& in, const Eigen::Vector3i& dims,
                              int axis, const std::vector<double>& k) {
  const int half = static_cast<int>(k.size()) / 2;
  std::vector<double> out(in.size(), 0.0);
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims.x());
  const std::size_t sz = sy * dims.y();
  const std::size_t strides[3] = {sx, sy, sz};
  const int n_axis = dims[axis];
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) {
        const std::size_t i = sz * z + sy * y + x;
        const int pos = axis == 0 ? x : (axis == 1 ? y : z);
        double acc = 0.0;
        for (int o = -half; o <= half; ++o) {
          const int p = pos + o;
          if (p < 0 || p >= n_axis) continue;
          acc += k[o + half] * in[i + static_cast<std::ptrdiff_t>(o) * strides[axis]];
        }
        out[i] = acc;
      }
  return out;
}

std::vector<double> conv3(const std::vector<double>& in, const Eigen::Vector3i& dims,
                          const std::vector<double>& k) {
  auto a = conv_axis(in, dims, 0, k);
  auto b = conv_axis(a, dims, 1, k);
  return conv_axis(b, dims, 2, k);
}

}  // namespace

double ssim3d(const VoxelVolume& ref, const VoxelVolume& test, int window, double sigma,
              double dynamic_range) {
  check_same_grid(ref, test);
  if (window < 1 || window % 2 == 0) throw ValidationError("ssim3d: window must be odd");
  std::vector<double> k(window);
  {
    const int half = window / 2;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
      k[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
  }
  const std::size_t n = ref.data.size();
  std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = ref.data[i];
    b[i] = test.data[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto& dims = ref.grid.dims;
  const auto mu_a = conv3(a, dims, k);
  const auto mu_b = conv3(b, dims, k);
  const auto m_aa = conv3(aa, dims, k);
  const auto m_bb = conv3(bb, dims, k);
  const auto m_ab = conv3(ab, dims, k);
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = m_aa[i] - ma * ma;
    const double vb = m_bb[i] - mb * mb;
    const double vab = m_ab[i] - ma * mb;
    acc += ((2 * ma * mb + c1) * (2 * vab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(n);
}

std::vector<std::uint8_t> support_mask(const VoxelVolume& ref, int dilate) {
  const auto& dims = ref.grid.dims;
  std::vector<std::uint8_t> mask(ref.data.size(), 0);
  for (std::size_t i = 0; i < ref.data.size(); ++i) mask[i] = ref.data[i] > 0.0f ? 1 : 0;
  for (int it = 0; it < dilate; ++it) {
    std::vector<std::uint8_t> next = mask;
    for (int z = 0; z < dims.z(); ++z)
      for (int y = 0; y < dims.y(); ++y)
        for (int x = 0; x < dims.x(); ++x) {
          if (mask[ref.grid.index(x, y, z)]) continue;
          bool touches = false;
          for (int a = 0; a < 3 && !touches; ++a) {
            for (int s : {-1, 1}) {
              int xx = x + (a == 0 ? s : 0);
              int yy = y + (a == 1 ? s : 0);
              int zz = z + (a == 2 ? s : 0);
              if (xx < 0 || yy < 0 || zz < 0 || xx >= dims.x() || yy >= dims.y() || zz >= dims.z())
                continue;
              if (mask[ref.grid.index(xx, yy, zz)]) {
                touches = true;
                break;
              }
            }
          }
          if (touches) next[ref.grid.index(x, y, z)] = 1;
        }
    mask.swap(next);
  }
  return mask;
}

RigidTransform mean_pose(const std::vector<RigidTransform>& poses) {
  if (poses.empty()) throw ValidationError("mean_pose: empty pose list");
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  Vec3 t = Vec3::Zero();
  for (const RigidTransform& p : poses) {
    const Vec4 q = quat_normalized(p.q);
    m += q * q.transpose();
    t += p.t;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m);
  Vec4 q = eig.eigenvectors().col(3);  // largest eigenvalue
  RigidTransform r;
  r.q = quat_normalized(q);
  r.t = t / static_cast<double>(poses.size());
  return r;
}

MotionReport motion_report(const std::vector<RigidTransform>& truth,
                           const std::vector<RigidTransform>& estimate) {
  if (truth.size() != estimate.size() || truth.empty())
    throw ValidationError("motion_report: pose lists must be non-empty and aligned");
  MotionReport rep;
  rep.gauge = compose(mean_pose(truth), mean_pose(estimate).inverse());
  rep.rot_deg.resize(truth.size());
  rep.trans_mm.resize(truth.size());
  double rsum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const RigidTransform aligned = compose(rep.gauge, estimate[i]);
    const auto [rot, trans] = geodesic_errors(truth[i], aligned);
    rep.rot_deg[i] = rot;
    rep.trans_mm[i] = trans;
    rsum += rot;
    tsum += trans;
    rep.rot_max_deg = std::max(rep.rot_max_deg, rot);
    rep.trans_max_mm = std::max(rep.trans_max_mm, trans);
  }
  rep.rot_mean_deg = rsum / truth.size();
  rep.trans_mean_mm = tsum / truth.size();
  rep.rot_median_deg = median_of(rep.rot_deg);
  rep.trans_median_mm = median_of(rep.trans_mm);
  return rep;
}

VoxelVolume resample_rigid(const VoxelVolume& test, const RigidTransform& g,
                           const GridSpec& ref_grid) {
  VoxelVolume out = VoxelVolume::zeros(ref_grid);
  out.intensity_scale = test.intensity_scale;
  for (int z = 0; z < ref_grid.dims.z(); ++z)
    for (int y = 0; y < ref_grid.dims.y(); ++y)
      for (int x = 0; x < ref_grid.dims.x(); ++x)
        out.at(x, y, z) = static_cast<float>(
            sample_trilinear(test, g.apply(ref_grid.voxel_center(x, y, z))));
  return out;
}

namespace {

double registration_cost(const VoxelVolume& ref, const VoxelVolume& test,
                         const RigidTransform& g, const Vec3& pivot, int stride) {
  // g is a rotation about the volume pivot plus a translation.
  double acc = 0.0;
  std::size_t count = 0;
  const auto& grid = ref.grid;
  for (int z = 0; z < grid.dims.z(); z += stride)
    for (int y = 0; y < grid.dims.y(); y += stride)
      for (int x = 0; x < grid.dims.x(); x += stride) {
        const Vec3 p = grid.voxel_center(x, y, z);
        const Vec3 q = quat_rotate(g.q, p - pivot) + pivot + g.t;
        const double d = static_cast<double>(ref.at(x, y, z)) - sample_trilinear(test, q);
        acc += d * d;
        ++count;
      }
  return acc / static_cast<double>(std::max<std::size_t>(count, 1));
}

}  // namespace

RigidTransform register_rigid(const VoxelVolume& ref, const VoxelVolume& test,
                              double max_rot_deg, double max_trans_mm) {
  const GridSpec& grid = ref.grid;
  const Vec3 pivot = grid.origin + 0.5 * grid.spacing.cwiseProduct(
                                       (grid.dims - Eigen::Vector3i::Ones()).cast<double>());
  const double rot_step = max_rot_deg / 2.0 * M_PI / 180.0;
  const double trans_step = max_trans_mm / 2.0;

  RigidTransform best;
  double best_cost = std::numeric_limits<double>::infinity();
  // coarse exhaustive sweep on a stride-2 lattice
  for (int rz = -2; rz <= 2; ++rz)
    for (int ry = -2; ry <= 2; ++ry)
      for (int rx = -2; rx <= 2; ++rx) {
        RigidTransform g;
        g.q = quat_from_axis_angle(Vec3(rx, ry, rz) * rot_step);
        for (int tz = -1; tz <= 1; ++tz)
          for (int ty = -1; ty <= 1; ++ty)
            for (int tx = -1; tx <= 1; ++tx) {
              g.t = Vec3(tx, ty, tz) * trans_step;
              const double cost = registration_cost(ref, test, g, pivot, 2);
              if (cost < best_cost) {
                best_cost = cost;
                best = g;
              }
            }
      }

  // pattern-search refinement at full resolution
  Vec3 w = axis_angle_from_quat(best.q);
  Vec3 t = best.t;
  double rot_delta = rot_step;
  double trans_delta = trans_step;
  best_cost = std::numeric_limits<double>::infinity();
  const double rot_min = 0.02 * M_PI / 180.0;
  const double trans_min = 0.02;
  while (rot_delta > rot_min || trans_delta > trans_min) {
    bool improved = false;
    auto try_cand = [&](const Vec3& wc, const Vec3& tc) {
      RigidTransform g;
      g.q = quat_from_axis_angle(wc);
      g.t = tc;
      const double cost = registration_cost(ref, test, g, pivot, 1);
      if (cost < best_cost) {
        best_cost = cost;
        w = wc;
        t = tc;
        improved = true;
      }
    };
    try_cand(w, t);
    for (int a = 0; a < 3; ++a)
      for (int s : {-1, 1}) {
        Vec3 wc = w;
        wc[a] += s * rot_delta;
        try_cand(wc, t);
        Vec3 tc = t;
        tc[a] += s * trans_delta;
        try_cand(w, tc);
      }
    if (!improved) {
      rot_delta *= 0.5;
      trans_delta *= 0.5;
    }
  }
  RigidTransform g;
  g.q = quat_from_axis_angle(w);
  g.t = t;
  // fold the pivot into a plain rigid transform
  RigidTransform out;
  out.q = g.q;
  out.t = pivot + g.t - quat_rotate(g.q, pivot);
  return out;
}

}  // namespace gsvr
