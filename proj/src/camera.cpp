#include "evline/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "evline/io.hpp"

namespace evline {

Mat3 Intrinsics::K() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Vec2 Intrinsics::project(const Vec3& p) const {
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

Vec3 Intrinsics::unproject(const Vec2& px) const {
  return {(px.x() - cx) / fx, (px.y() - cy) / fy, 1.0};
}

bool Intrinsics::contains(const Vec2& px, double slack) const {
  return px.x() >= -slack && px.y() >= -slack && px.x() <= width - 1 + slack &&
         px.y() <= height - 1 + slack;
}

CameraPose CameraPose::inverse() const {
  CameraPose inv;
  inv.R = R.transpose();
  inv.t = -(R.transpose() * t);
  inv.stamp = stamp;
  return inv;
}

CameraPose CameraPose::operator*(const CameraPose& o) const {
  CameraPose out;
  out.R = R * o.R;
  out.t = R * o.t + t;
  out.stamp = o.stamp;
  return out;
}

bool is_rotation(const Mat3& R, double tol) {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Mat3 W;
    W << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
    return Mat3::Identity() + W;
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

double rotation_angle(const Mat3& A, const Mat3& B) {
  const double c = ((A.transpose() * B).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Mat3 euler_zyx(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 euler_zyx_angles(const Mat3& R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  return {yaw, pitch, roll};
}

CameraPose interpolate_pose(std::span<const CameraPose> keys, TimeUs t) {
  if (keys.empty()) throw std::invalid_argument("interpolate_pose: no keyposes");
  if (t <= keys.front().stamp) {
    CameraPose p = keys.front();
    p.stamp = t;
    return p;
  }
  if (t >= keys.back().stamp) {
    CameraPose p = keys.back();
    p.stamp = t;
    return p;
  }
  auto hi = std::upper_bound(keys.begin(), keys.end(), t,
                             [](TimeUs v, const CameraPose& k) { return v < k.stamp; });
  auto lo = hi - 1;
  const double s = double(t - lo->stamp) / double(hi->stamp - lo->stamp);
  Eigen::Quaterniond qa(lo->R), qb(hi->R);
  CameraPose p;
  p.R = qa.slerp(s, qb).normalized().toRotationMatrix();
  p.t = (1.0 - s) * lo->t + s * hi->t;
  p.stamp = t;
  return p;
}

std::vector<CameraPose> load_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pose file " + path);
  std::vector<CameraPose> poses;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long t;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw ParseError("expected `t_us tx ty tz qx qy qz qw`", lineno);
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError("quaternion is not unit length", lineno);
    CameraPose p;
    p.R = q.normalized().toRotationMatrix();
    p.t = {tx, ty, tz};
    p.stamp = t;
    if (!poses.empty() && p.stamp <= poses.back().stamp)
      throw ParseError("pose timestamps must be strictly increasing", lineno);
    poses.push_back(p);
  }
  return poses;
}

void save_poses(const std::string& path, std::span<const CameraPose> poses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pose file " + path);
  for (const auto& p : poses) {
    Eigen::Quaterniond q(p.R);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1.0;
    out << p.stamp << ' ' << fmt_double(p.t.x()) << ' ' << fmt_double(p.t.y()) << ' '
        << fmt_double(p.t.z()) << ' ' << fmt_double(q.x()) << ' ' << fmt_double(q.y()) << ' '
        << fmt_double(q.z()) << ' ' << fmt_double(q.w()) << '\n';
  }
}

Intrinsics load_intrinsics(const std::string& path) {
  const auto kv = read_key_values(path);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("intrinsics file " + path + " lacks key `" + key + "`");
    return it->second;
  };
  Intrinsics K;
  K.fx = parse_double(get("fx"));
  K.fy = parse_double(get("fy"));
  K.cx = parse_double(get("cx"));
  K.cy = parse_double(get("cy"));
  K.width = static_cast<int>(parse_int(get("width")));
  K.height = static_cast<int>(parse_int(get("height")));
  if (K.fx <= 0 || K.fy <= 0) throw ParseError("focal lengths must be positive");
  if (K.width <= 0 || K.height <= 0) throw ParseError("sensor size must be positive");
  return K;
}

void save_intrinsics(const std::string& path, const Intrinsics& K) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write intrinsics file " + path);
  out << "fx = " << fmt_double(K.fx) << "\nfy = " << fmt_double(K.fy)
      << "\ncx = " << fmt_double(K.cx) << "\ncy = " << fmt_double(K.cy)
      << "\nwidth = " << K.width << "\nheight = " << K.height << '\n';
}

}  // namespace evline
