#include "gsvr/rigid_motion.hpp"

#include <cmath>

namespace gsvr {

Vec4 quat_identity() { return Vec4(1, 0, 0, 0); }

Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Vec4 quat_conjugate(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

Vec4 quat_normalized(const Vec4& q) {
  double n = q.norm();
  if (!(n > 0.0)) throw ValidationError("cannot normalize zero quaternion");
  Vec4 r = q / n;
  if (r[0] < 0.0) r = -r;  // canonical hemisphere
  return r;
}

Vec3 quat_rotate(const Vec4& q, const Vec3& v) {
  const Vec3 u(q[1], q[2], q[3]);
  const double w = q[0];
  const Vec3 uv = u.cross(v);
  return v + 2.0 * (w * uv + u.cross(uv));
}

Mat3 quat_to_matrix(const Vec4& q) {
  const double n = q.squaredNorm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  m << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return m / n;
}

void quat_matrix_derivs(const Vec4& q, Mat3& R, Mat3 dR[4]) {
  const double n = q.squaredNorm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  R = quat_to_matrix(q);
  Mat3 dw, dx, dy, dz;
  dw << w, -z, y,
      z, w, -x,
      -y, x, w;
  dx << x, y, z,
      y, -x, -w,
      z, w, -x;
  dy << -y, x, w,
      x, y, z,
      -w, z, -y;
  dz << -z, -w, x,
      w, -z, y,
      x, y, z;
  // d(Rtilde/n)/dq_k = (dRtilde_k - 2 q_k R) / n
  dR[0] = (2.0 * dw - 2.0 * w * R) / n;
  dR[1] = (2.0 * dx - 2.0 * x * R) / n;
  dR[2] = (2.0 * dy - 2.0 * y * R) / n;
  dR[3] = (2.0 * dz - 2.0 * z * R) / n;
}

Vec4 quat_from_axis_angle(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  double half_sinc;  // sin(theta/2)/theta
  double c;
  if (theta2 < 1e-14) {
    half_sinc = 0.5 - theta2 / 48.0;
    c = 1.0 - theta2 / 8.0;
  } else {
    const double theta = std::sqrt(theta2);
    half_sinc = std::sin(0.5 * theta) / theta;
    c = std::cos(0.5 * theta);
  }
  return Vec4(c, half_sinc * w.x(), half_sinc * w.y(), half_sinc * w.z());
}

Vec3 axis_angle_from_quat(const Vec4& q_in) {
  Vec4 q = quat_normalized(q_in);
  const Vec3 u(q[1], q[2], q[3]);
  const double sin_half = u.norm();
  const double cos_half = q[0];
  if (sin_half < 1e-12) return 2.0 * u;  // small angle: sin(t/2) ~ t/2
  const double angle = 2.0 * std::atan2(sin_half, cos_half);
  return (angle / sin_half) * u;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
      v.z(), 0, -v.x(),
      -v.y(), v.x(), 0;
  return m;
}

Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 K = skew(w);
  double a, b;  // J = I + a K + b K^2
  if (theta2 < 1e-12) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * K + b * K * K;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform r;
  r.q = quat_conjugate(quat_normalized(q));
  r.t = -quat_rotate(r.q, t);
  return r;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform r;
  r.q = quat_normalized(quat_mul(a.q, b.q));
  r.t = quat_rotate(a.q, b.t) + a.t;
  return r;
}

RigidTransform exp_update(const RigidTransform& base, const MotionParams& params) {
  if (!params.axis_angle.allFinite() || !params.translation.allFinite())
    throw ValidationError("exp_update: motion params must be finite");
  if (params.axis_angle.norm() >= M_PI)
    throw ValidationError("exp_update: |axis_angle| must be < pi");
  RigidTransform r;
  r.q = quat_normalized(quat_mul(quat_from_axis_angle(params.axis_angle), base.q));
  r.t = base.t + params.translation;
  return r;
}

void SliceGeometry::validate() const {
  if (rows < 1 || cols < 1) throw ValidationError("slice rows/cols must be >= 1");
  if (!(in_plane_spacing.minCoeff() > 0.0)) throw ValidationError("in-plane spacing must be positive");
  if (!(slice_thickness > 0.0)) throw ValidationError("slice thickness must be positive");
  if (!(slice_gap > 0.0)) throw ValidationError("slice gap must be positive");
}

Vec3 slice_local_point(const SliceGeometry& geom, double row, double col, double depth_offset) {
  const double u = (col - 0.5 * (geom.cols - 1)) * geom.in_plane_spacing.x();
  const double v = (row - 0.5 * (geom.rows - 1)) * geom.in_plane_spacing.y();
  return Vec3(u, v, depth_offset);
}

Vec3 map_local_to_world(const SliceGeometry& geom, const RigidTransform& t, const Vec3& local) {
  return quat_rotate(t.q, quat_rotate(geom.nominal_pose.q, local)) + geom.nominal_pose.t + t.t;
}

Vec3 map_slice_to_world(const SliceGeometry& geom, const RigidTransform& t,
                        double row, double col, double depth_offset) {
  return map_local_to_world(geom, t, slice_local_point(geom, row, col, depth_offset));
}

Vec3 world_to_slice_local(const SliceGeometry& geom, const RigidTransform& t, const Vec3& world) {
  const Vec3 centered = world - geom.nominal_pose.t - t.t;
  return quat_rotate(quat_conjugate(quat_normalized(geom.nominal_pose.q)),
                     quat_rotate(quat_conjugate(quat_normalized(t.q)), centered));
}

Mat36 transform_jacobian(const SliceGeometry& geom, const RigidTransform& t,
                         double row, double col, double depth_offset) {
  const Vec3 local = slice_local_point(geom, row, col, depth_offset);
  const Vec3 rotated = quat_rotate(t.q, quat_rotate(geom.nominal_pose.q, local));
  Mat36 j;
  j.block<3, 3>(0, 0) = -skew(rotated);
  j.block<3, 3>(0, 3) = Mat3::Identity();
  return j;
}

RigidTransform effective_pose(const SliceGeometry& geom, const RigidTransform& t) {
  RigidTransform r;
  r.q = quat_normalized(quat_mul(t.q, geom.nominal_pose.q));
  r.t = geom.nominal_pose.t + t.t;
  return r;
}

std::pair<double, double> geodesic_errors(const RigidTransform& a, const RigidTransform& b) {
  const Vec4 rel = quat_mul(quat_normalized(a.q), quat_conjugate(quat_normalized(b.q)));
  const double angle = axis_angle_from_quat(rel).norm();
  return {angle * 180.0 / M_PI, (a.t - b.t).norm()};
}

}  // namespace gsvr
