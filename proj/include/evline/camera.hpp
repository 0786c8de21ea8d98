#pragma once

#include <span>
#include <string>
#include <vector>

#include "evline/common.hpp"

namespace evline {

/// Pinhole intrinsics plus sensor resolution. The camera looks along +z.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Mat3 K() const;
  Vec2 project(const Vec3& p_cam) const;
  /// Viewing direction of a pixel, scaled so that z = 1.
  Vec3 unproject(const Vec2& px) const;
  bool contains(const Vec2& px, double slack = 0.0) const;
};

/// Camera-to-world rigid pose: x_world = R * x_cam + t. The camera
/// center in world coordinates is therefore t.
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  TimeUs stamp = 0;

  const Vec3& center() const { return t; }
  Vec3 to_camera(const Vec3& x_world) const { return R.transpose() * (x_world - t); }
  Vec3 to_world(const Vec3& x_cam) const { return R * x_cam + t; }
  CameraPose inverse() const;
  CameraPose operator*(const CameraPose& other) const;
};

/// Rotation matrix with unit determinant, within tol.
bool is_rotation(const Mat3& R, double tol = 1e-9);

/// Exponential / logarithm maps of SO(3).
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& R);

/// Geodesic angle between two rotations, radians: arccos((tr(AᵀB) - 1) / 2).
double rotation_angle(const Mat3& A, const Mat3& B);

/// Z-Y-X (yaw, pitch, roll) composition Rz(yaw) Ry(pitch) Rx(roll).
Mat3 euler_zyx(double yaw, double pitch, double roll);
/// Inverse of euler_zyx on its principal branch. Returns (yaw, pitch, roll).
Vec3 euler_zyx_angles(const Mat3& R);

/// Pose at time t from time-sorted keyposes: slerp on rotation, linear on
/// translation, clamped at both ends.
CameraPose interpolate_pose(std::span<const CameraPose> keyposes, TimeUs t);

/// Pose file: one line per pose, `t_us tx ty tz qx qy qz qw`
/// (unit quaternion, Hamilton convention, camera-to-world).
std::vector<CameraPose> load_poses(const std::string& path);
void save_poses(const std::string& path, std::span<const CameraPose> poses);

/// Intrinsics file: `key = value` lines with fx, fy, cx, cy, width, height.
Intrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const Intrinsics& K);

}  // namespace evline
