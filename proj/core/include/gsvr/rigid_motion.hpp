// Per-slice rigid transforms, their chart for optimization, and the mapping
// from slice pixel coordinates into world space.
#pragma once

#include <Eigen/Core>
#include <utility>

#include "gsvr/common.hpp"

namespace gsvr {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternion, (w, x, y, z)
using Mat3 = Eigen::Matrix3d;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// --- quaternion helpers (w,x,y,z convention) ---

Vec4 quat_identity();
Vec4 quat_mul(const Vec4& a, const Vec4& b);
Vec4 quat_conjugate(const Vec4& q);
Vec4 quat_normalized(const Vec4& q);
Vec3 quat_rotate(const Vec4& q, const Vec3& v);

// Rotation matrix of q/|q| (homogeneous form, well-defined for any q != 0).
Mat3 quat_to_matrix(const Vec4& q);

// R(q) and its four partial derivatives with respect to the raw components.
// The derivatives are those of the normalizing formula, so they already lie
// in the tangent space of the unit sphere at unit q.
void quat_matrix_derivs(const Vec4& q, Mat3& R, Mat3 dR[4]);

// exp: axis-angle vector -> unit quaternion (Taylor branch near zero).
Vec4 quat_from_axis_angle(const Vec3& w);
// log: unit quaternion -> axis-angle vector with angle in [0, pi].
Vec3 axis_angle_from_quat(const Vec4& q);

// Left Jacobian of SO(3): exp(w + dw) ~= exp(J_l(w) dw) * exp(w).
Mat3 so3_left_jacobian(const Vec3& w);

Mat3 skew(const Vec3& v);

// --- rigid transforms ---

struct RigidTransform {
  Vec4 q = Vec4(1, 0, 0, 0);
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return quat_rotate(q, p) + t; }
  RigidTransform inverse() const;
};

// Standard composition: (a * b)(x) = a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

// Chart increment for motion optimization.
struct MotionParams {
  Vec3 axis_angle = Vec3::Zero();  // radians
  Vec3 translation = Vec3::Zero();  // mm

  Vec6 as_vector() const {
    Vec6 v;
    v << axis_angle, translation;
    return v;
  }
  static MotionParams from_vector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
};

// (exp(axis_angle) * base.q, base.t + translation). Rejects non-finite params
// and |axis_angle| >= pi (outside the chart).
RigidTransform exp_update(const RigidTransform& base, const MotionParams& params);

// --- slice geometry ---

// Geometry of one slice. nominal_pose maps slice-local mm coordinates
// (origin at the slice center, z along the slice normal) into world space.
struct SliceGeometry {
  Eigen::Vector2d in_plane_spacing = Eigen::Vector2d(1.0, 1.0);  // mm, (col, row)
  int rows = 0;
  int cols = 0;
  double slice_thickness = 1.0;  // mm
  double slice_gap = 1.0;        // mm, center-to-center distance to the next slice
  RigidTransform nominal_pose;

  void validate() const;
};

// Pixel (row, col) in slice-local mm, centered on the slice.
Vec3 slice_local_point(const SliceGeometry& geom, double row, double col, double depth_offset = 0.0);

// World position of a slice-local point under motion state t. The motion
// rotation acts about the slice center so that rotation and translation
// gradients decouple at first order:
//   world = R_t * (R_nominal * local) + t_nominal + t_t
Vec3 map_local_to_world(const SliceGeometry& geom, const RigidTransform& t, const Vec3& local);
Vec3 map_slice_to_world(const SliceGeometry& geom, const RigidTransform& t,
                        double row, double col, double depth_offset);
// Inverse of map_local_to_world.
Vec3 world_to_slice_local(const SliceGeometry& geom, const RigidTransform& t, const Vec3& world);

// Jacobian of the world point with respect to MotionParams at params = 0
// around t: [ -skew(R_t R_nom local) | I ].
Mat36 transform_jacobian(const SliceGeometry& geom, const RigidTransform& t,
                         double row, double col, double depth_offset);

// Full slice pose (local -> world) equivalent to motion state t applied on
// top of the nominal pose: rotation R_t R_nom, translation t_nom + t_t.
RigidTransform effective_pose(const SliceGeometry& geom, const RigidTransform& t);

// (rotation angle of a*b^-1 in degrees, |t_a - t_b| in mm).
std::pair<double, double> geodesic_errors(const RigidTransform& a, const RigidTransform& b);

}  // namespace gsvr
