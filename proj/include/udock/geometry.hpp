#pragma once

#include <Eigen/Dense>

namespace udock {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

/// Pinhole camera parameters. k_x/k_y scale camera metrics to pixels,
/// k_theta is the skew coefficient, (u_0, v_0) the principal point.
struct CameraIntrinsics {
  double k_x = 0.0;
  double k_y = 0.0;
  double k_theta = 0.0;
  double u_0 = 0.0;
  double v_0 = 0.0;
  int image_width = 0;
  int image_height = 0;

  Matrix3d matrix() const {
    Matrix3d k;
    k << k_x, k_theta, u_0, 0.0, k_y, v_0, 0.0, 0.0, 1.0;
    return k;
  }

  /// Throws PreconditionViolation unless k_x,k_y > 0 and the principal
  /// point lies inside the image.
  void validate() const;
};

/// Rigid transform from the reference frame to the camera frame:
/// X_c = rotation * X_r + translation. Translation is in millimetres.
struct Pose {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  /// Intrinsic Z-Y-X (yaw, pitch, roll), all in degrees.
  static Pose from_euler_deg(double yaw, double pitch, double roll,
                             const Vector3d& translation);

  /// (yaw, pitch, roll) in degrees. Throws GimbalLock at |pitch| >= 89.99 deg.
  Vector3d euler_deg() const;

  /// R^T R = I and det(R) = +1, both within tol elementwise.
  bool is_valid_rotation(double tol = 1e-9) const;
};

Matrix3d rotation_from_euler_deg(double yaw, double pitch, double roll);
Vector3d euler_deg_from_rotation(const Matrix3d& r);

/// Geodesic angle between two rotations in degrees. Uses atan2 of the skew
/// norm against the trace so tiny angles keep full precision.
double rotation_angle_deg(const Matrix3d& a, const Matrix3d& b);

/// Projects a reference-frame point to pixel coordinates.
/// Throws PointBehindCamera when the transformed depth is <= 0.
Vector2d project(const Vector3d& point_r, const CameraIntrinsics& intr,
                 const Pose& pose);

}  // namespace udock
