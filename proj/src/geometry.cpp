#include "udock/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "udock/errors.hpp"

namespace udock {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToDeg = 180.0 / M_PI;
}  // namespace

void CameraIntrinsics::validate() const {
  if (!(k_x > 0.0) || !(k_y > 0.0))
    throw PreconditionViolation("intrinsics: k_x and k_y must be positive");
  if (!(u_0 >= 0.0 && u_0 < image_width) || !(v_0 >= 0.0 && v_0 < image_height))
    throw PreconditionViolation("intrinsics: principal point outside image");
}

Matrix3d rotation_from_euler_deg(double yaw, double pitch, double roll) {
  const double cz = std::cos(yaw * kDegToRad), sz = std::sin(yaw * kDegToRad);
  const double cy = std::cos(pitch * kDegToRad), sy = std::sin(pitch * kDegToRad);
  const double cx = std::cos(roll * kDegToRad), sx = std::sin(roll * kDegToRad);
  Matrix3d rz, ry, rx;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  return rz * ry * rx;
}

Vector3d euler_deg_from_rotation(const Matrix3d& r) {
  // intrinsic Z-Y-X: R(2,0) = -sin(pitch)
  const double sp = -r(2, 0);
  const double pitch = std::asin(std::clamp(sp, -1.0, 1.0)) * kRadToDeg;
  if (std::abs(pitch) >= 89.99)
    throw GimbalLock("pitch within 0.01 deg of +/-90");
  const double yaw = std::atan2(r(1, 0), r(0, 0)) * kRadToDeg;
  const double roll = std::atan2(r(2, 1), r(2, 2)) * kRadToDeg;
  return {yaw, pitch, roll};
}

Pose Pose::from_euler_deg(double yaw, double pitch, double roll,
                          const Vector3d& translation) {
  return {rotation_from_euler_deg(yaw, pitch, roll), translation};
}

Vector3d Pose::euler_deg() const { return euler_deg_from_rotation(rotation); }

bool Pose::is_valid_rotation(double tol) const {
  const Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

double rotation_angle_deg(const Matrix3d& a, const Matrix3d& b) {
  const Matrix3d d = a.transpose() * b;
  const Vector3d skew(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  const double s = 0.5 * skew.norm();
  const double c = 0.5 * (d.trace() - 1.0);
  return std::atan2(s, c) * kRadToDeg;
}

Vector2d project(const Vector3d& point_r, const CameraIntrinsics& intr,
                 const Pose& pose) {
  const Vector3d pc = pose.rotation * point_r + pose.translation;
  if (!(pc.z() > 0.0)) throw PointBehindCamera();
  const Vector3d uvw = intr.matrix() * pc;
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
}

}  // namespace udock
