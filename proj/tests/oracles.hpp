// Test-only oracles: independent brute-force implementations used to freeze
// expected values. These deliberately avoid the library's evaluation paths
// (explicit matrix inverses, direct quadratic-loop formulas, finite
// differences) so agreement is meaningful.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "gsvr/acquisition.hpp"
#include "gsvr/gaussian_field.hpp"
#include "gsvr/image.hpp"
#include "gsvr/objective.hpp"
#include "gsvr/rigid_motion.hpp"

namespace oracle {

using gsvr::GaussianPrimitive;
using gsvr::GaussianSet;
using gsvr::Image2D;
using gsvr::Mat3;
using gsvr::Rng;
using gsvr::Vec3;
using gsvr::Vec4;

// Single-primitive evaluation through an explicitly assembled covariance
// Sigma = R S^2 R^T and a numerical inverse.
inline double eval_primitive(const GaussianPrimitive& g, const Vec3& x) {
  const Mat3 r = gsvr::quat_to_matrix(g.rotation);
  const Vec3 s = g.log_scales.array().exp();
  const Mat3 cov = r * (s.array().square().matrix()).asDiagonal() * r.transpose();
  const Vec3 d = x - g.center;
  const double radius = 3.0 * s.maxCoeff();
  if (d.norm() > radius) return 0.0;
  const double q = d.dot(cov.inverse() * d);
  return g.intensity * std::exp(-0.5 * q);
}

// All-primitive sum with the same truncation rule, no spatial index.
inline double eval_volume(const GaussianSet& set, const Vec3& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < set.size(); ++j) acc += eval_primitive(set.primitive(j), x);
  return acc;
}

// Untruncated sum, for the truncation error bound.
inline double eval_volume_untruncated(const GaussianSet& set, const Vec3& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < set.size(); ++j) {
    const GaussianPrimitive g = set.primitive(j);
    const Mat3 r = gsvr::quat_to_matrix(g.rotation);
    const Vec3 s = g.log_scales.array().exp();
    const Mat3 cov = r * (s.array().square().matrix()).asDiagonal() * r.transpose();
    const Vec3 d = x - g.center;
    acc += g.intensity * std::exp(-0.5 * d.dot(cov.inverse() * d));
  }
  return acc;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x0, double h) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// Relative error against a reference with an absolute floor.
inline double rel_err(double got, double want, double floor_val = 1e-9) {
  return std::abs(got - want) / std::max(std::abs(want), floor_val);
}

// Direct-formula windowed SSIM: quadratic loops, zero padding, same window
// semantics as the library contract.
inline double ssim_direct(const Image2D& a, const Image2D& b, int window, double sigma, double L) {
  const int half = window / 2;
  std::vector<double> k(window);
  double ksum = 0.0;
  for (int i = 0; i < window; ++i) {
    k[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    ksum += k[i];
  }
  for (double& v : k) v /= ksum;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  double acc = 0.0;
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
          const int rr = r + dr, cc = c + dc;
          const double w = k[dr + half] * k[dc + half];
          const double va = (rr >= 0 && rr < a.rows && cc >= 0 && cc < a.cols) ? a.at(rr, cc) : 0.0;
          const double vb = (rr >= 0 && rr < b.rows && cc >= 0 && cc < b.cols) ? b.at(rr, cc) : 0.0;
          ma += w * va;
          mb += w * vb;
          maa += w * va * va;
          mbb += w * vb * vb;
          mab += w * va * vb;
        }
      const double va = maa - ma * ma;
      const double vb = mbb - mb * mb;
      const double vab = mab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * vab + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return acc / static_cast<double>(a.size());
}

// Triple-loop anisotropic TV with per-axis pair normalization.
inline double tv_direct(const gsvr::DenseGrid& vol) {
  const auto& dims = vol.grid.dims;
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    if (dims[axis] < 2) continue;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (int z = 0; z < dims.z(); ++z)
      for (int y = 0; y < dims.y(); ++y)
        for (int x = 0; x < dims.x(); ++x) {
          int xx = x + (axis == 0), yy = y + (axis == 1), zz = z + (axis == 2);
          if (xx >= dims.x() || yy >= dims.y() || zz >= dims.z()) continue;
          sum += std::abs(vol.at(xx, yy, zz) - vol.at(x, y, z));
          ++pairs;
        }
    total += sum / static_cast<double>(pairs);
  }
  return total;
}

// Random scene helpers (deterministic given the rng).
inline GaussianSet random_set(Rng& rng, int count, double extent_mm = 20.0,
                              double scale_min = 0.8, double scale_max = 3.0) {
  GaussianSet set;
  for (int j = 0; j < count; ++j) {
    GaussianPrimitive g;
    g.center = Vec3(rng.uniform(-extent_mm, extent_mm), rng.uniform(-extent_mm, extent_mm),
                    rng.uniform(-extent_mm, extent_mm));
    g.rotation = gsvr::quat_normalized(
        Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    g.log_scales = Vec3(std::log(rng.uniform(scale_min, scale_max)),
                        std::log(rng.uniform(scale_min, scale_max)),
                        std::log(rng.uniform(scale_min, scale_max)));
    g.intensity = rng.uniform(-0.5, 1.5);
    set.push_back(g);
  }
  return set;
}

inline gsvr::RigidTransform random_transform(Rng& rng, double rot_amp = 0.5, double trans_amp = 5.0) {
  gsvr::RigidTransform t;
  t.q = gsvr::quat_from_axis_angle(
      Vec3(rng.uniform(-rot_amp, rot_amp), rng.uniform(-rot_amp, rot_amp), rng.uniform(-rot_amp, rot_amp)));
  t.t = Vec3(rng.uniform(-trans_amp, trans_amp), rng.uniform(-trans_amp, trans_amp),
             rng.uniform(-trans_amp, trans_amp));
  return t;
}

inline Eigen::AlignedBox3d set_bounds(const GaussianSet& set, double margin) {
  Eigen::AlignedBox3d box;
  for (const Vec3& c : set.centers) box.extend(c);
  box.min() -= Vec3::Constant(margin);
  box.max() += Vec3::Constant(margin);
  return box;
}

}  // namespace oracle
