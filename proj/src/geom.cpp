#include "evline/geom.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "evline/kernels.hpp"

namespace evline {

// ---------------------------------------------------------------------------
// 2D helpers
// ---------------------------------------------------------------------------

double point_line_distance(const Vec2& p, const LineSegment2D& s) {
  return std::abs(s.normal().dot(p - s.p1));
}

double point_segment_distance(const Vec2& p, const LineSegment2D& s) {
  const Vec2 ab = s.p2 - s.p1;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - s.p1).norm();
  const double u = std::clamp((p - s.p1).dot(ab) / len2, 0.0, 1.0);
  return (p - (s.p1 + u * ab)).norm();
}

Vec2 project_onto_line(const Vec2& p, const LineSegment2D& s) {
  const Vec2 d = s.direction();
  return s.p1 + d * d.dot(p - s.p1);
}

double line_angle(const LineSegment2D& a, const LineSegment2D& b) {
  const double c = std::abs(a.direction().dot(b.direction()));
  return std::acos(std::clamp(c, 0.0, 1.0));
}

Eigen::Vector3d homogeneous_line(const LineSegment2D& s) {
  const Vec2 n = s.normal();
  return {n.x(), n.y(), -n.dot(s.p1)};
}

// ---------------------------------------------------------------------------
// Affine Grassmannian
// ---------------------------------------------------------------------------

void AffineSubspace::validate(double tol) const {
  if (basis.rows() != displacement.rows())
    throw std::invalid_argument("affine subspace: basis and displacement dimensions differ");
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  if ((gram - Eigen::MatrixXd::Identity(k(), k())).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("affine subspace: basis is not orthonormal");
  if (k() > 0 && (basis.transpose() * displacement).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("affine subspace: displacement is not orthogonal to the basis");
}

Eigen::MatrixXd embed(const AffineSubspace& sub) {
  sub.validate();
  const int n = sub.n(), k = sub.k();
  const double s = std::sqrt(1.0 + sub.displacement.squaredNorm());
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n + 1, k + 1);
  Y.topLeftCorner(n, k) = sub.basis;
  Y.block(0, k, n, 1) = sub.displacement / s;
  Y(n, k) = 1.0 / s;
  return Y;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& Y1, const Eigen::MatrixXd& Y2) {
  if (Y1.rows() != Y2.rows())
    throw std::invalid_argument("principal_angles: ambient dimensions differ");
  const Eigen::MatrixXd& A = Y1.cols() <= Y2.cols() ? Y1 : Y2;
  const Eigen::MatrixXd& B = Y1.cols() <= Y2.cols() ? Y2 : Y1;
  const Eigen::Index k = A.cols();
  // Cosines from AᵀB, sines from the part of A outside span(B). The sine
  // branch resolves small angles that arccos cannot.
  Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(A.transpose() * B);
  const Eigen::MatrixXd residual = A - B * (B.transpose() * A);
  Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(residual);
  Eigen::VectorXd sines = sin_svd.singularValues();  // descending
  Eigen::VectorXd angles(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = std::clamp(cos_svd.singularValues()(i), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - i), 0.0, 1.0);
    angles(i) = c * c < 0.5 ? std::acos(c) : std::asin(s);
  }
  std::sort(angles.data(), angles.data() + k);
  return angles;
}

double graff_distance(const AffineSubspace& a, const AffineSubspace& b) {
  if (a.n() != b.n()) throw std::invalid_argument("graff_distance: ambient dimensions differ");
  return principal_angles(embed(a), embed(b)).norm();
}

// ---------------------------------------------------------------------------
// Lines and planes
// ---------------------------------------------------------------------------

Line3D Line3D::through(const Vec3& a, const Vec3& b) {
  const Vec3 dir = b - a;
  if (dir.norm() == 0.0) throw DegenerateError("Line3D::through: coincident points");
  Line3D l = from_point_direction(a, dir);
  l.endpoints = std::make_pair(a, b);
  return l;
}

Line3D Line3D::from_point_direction(const Vec3& p, const Vec3& dir) {
  Line3D l;
  l.d = dir.normalized();
  l.m = p.cross(l.d);
  return l;
}

Vec3 Line3D::closest_point(const Vec3& x) const { return anchor() + d * d.dot(x); }

double Line3D::distance(const Vec3& x) const { return (x - closest_point(x)).norm(); }

Line3D Line3D::transformed(const Mat3& R, const Vec3& t) const {
  Line3D out;
  out.d = R * d;
  out.m = R * m + t.cross(out.d);
  if (endpoints) out.endpoints = std::make_pair(R * endpoints->first + t, R * endpoints->second + t);
  return out;
}

AffineSubspace Line3D::as_subspace() const {
  AffineSubspace s;
  s.basis = d;
  s.displacement = anchor();
  return s;
}

Line3D intersect_planes(const Plane3D& a, const Plane3D& b, double min_angle_rad) {
  const Vec3 d = a.n.cross(b.n);
  const double s = d.norm();
  if (s <= std::sin(min_angle_rad) || s < 1e-15)
    throw DegenerateError("intersect_planes: planes are parallel");
  Line3D l;
  l.d = d / s;
  l.m = (a.dist * b.n - b.dist * a.n) / s;
  // Remove the round-off component along d.
  l.m -= l.d.dot(l.m) * l.d;
  return l;
}

Plane3D Plane3D::through(const Vec3& point, const Vec3& normal) {
  Plane3D p;
  p.n = normal.normalized();
  p.dist = -p.n.dot(point);
  return p;
}

Eigen::Matrix<double, 3, 2> Plane3D::basis() const {
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Vec3 b1 = n.cross(Vec3::Unit(axis)).normalized();
  const Vec3 b2 = n.cross(b1);
  Eigen::Matrix<double, 3, 2> B;
  B << b1, b2;
  return B;
}

Plane3D Plane3D::transformed(const Mat3& R, const Vec3& t) const {
  return through(R * displacement() + t, R * n);
}

AffineSubspace Plane3D::as_subspace() const {
  AffineSubspace s;
  s.basis = basis();
  s.displacement = displacement();
  return s;
}

double OrthonormalLine::w1() const { return std::cos(phi); }
double OrthonormalLine::w2() const { return std::sin(phi); }

OrthonormalLine plucker_to_orthonormal(const Line3D& line, double eps) {
  const Vec3 d = line.d.normalized();
  const double mn = line.m.norm();
  Vec3 u2;
  double phi;
  if (mn > eps) {
    u2 = line.m / mn;
    phi = std::atan2(mn, 1.0);
  } else {
    int axis = 0;
    d.cwiseAbs().minCoeff(&axis);
    u2 = d.cross(Vec3::Unit(axis)).normalized();
    phi = 0.0;
  }
  Mat3 U;
  U.col(0) = d;
  U.col(1) = u2;
  U.col(2) = d.cross(u2).normalized();
  return {so3_log(U), phi};
}

Line3D orthonormal_to_plucker(const OrthonormalLine& ol, double eps) {
  const double w1 = ol.w1();
  if (w1 <= eps) throw DegenerateError("orthonormal line at infinity (w1 <= eps)");
  const Mat3 U = ol.U();
  Line3D l;
  l.d = U.col(0);
  l.m = (ol.w2() / w1) * U.col(1);
  return l;
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

namespace {

GrassmannResidual pack(const double* r) {
  GrassmannResidual out;
  out.r1 << r[0], r[1], r[2];
  out.r2 << r[3], r[4], r[5], r[6];
  return out;
}

}  // namespace

GrassmannResidual tri_residual_raw(const Vec3& v, const Vec3& c0,
                                   const Eigen::Matrix<double, 3, 2>& pi, const Vec3& d0) {
  double r[7];
  const Mat3 P = pi * pi.transpose();
  kernels::grassmann_terms<double>(v, c0, P, d0, r);
  return pack(r);
}

GrassmannResidual tri_residual(const Line3D& line, const Plane3D& plane, const Vec3& ref) {
  const Vec3 p = line.closest_point(ref);
  const Vec3 d0 = -(plane.dist + plane.n.dot(p)) * plane.n;
  return tri_residual_raw(line.d, Vec3::Zero(), plane.basis(), d0);
}

GrassmannResidual ref_residual(const Plane3D& plane_cam, const Line3D& line_world,
                               const CameraPose& pose) {
  const Line3D line_cam = line_world.transformed(pose.R.transpose(), -(pose.R.transpose() * pose.t));
  return tri_residual(line_cam, plane_cam);
}

GrassmannResidual event_residual(const Line3D& line_world, const Vec2& pixel,
                                 const CameraPose& pose, const Intrinsics& K) {
  const Line3D line_cam = line_world.transformed(pose.R.transpose(), -(pose.R.transpose() * pose.t));
  const double mn = line_cam.m.norm();
  if (mn < 1e-12) throw DegenerateError("event_residual: line passes through the camera center");
  Plane3D plane;
  plane.n = line_cam.m / mn;
  plane.dist = 0.0;
  const Line3D ray = Line3D::from_point_direction(Vec3::Zero(), K.unproject(pixel));
  return tri_residual(ray, plane);
}

// ---------------------------------------------------------------------------
// Back-projection
// ---------------------------------------------------------------------------

Plane3D viewing_plane_cam(const LineSegment2D& seg, const Intrinsics& K) {
  const Vec3 n = K.unproject(seg.p1).cross(K.unproject(seg.p2));
  const double nn = n.norm();
  if (nn < 1e-15 || seg.length() == 0.0)
    throw DegenerateError("viewing plane of a zero-length segment");
  Plane3D p;
  p.n = n / nn;
  p.dist = 0.0;
  return p;
}

Plane3D backproject_line(const LineSegment2D& seg, const CameraPose& pose, const Intrinsics& K) {
  const Plane3D pc = viewing_plane_cam(seg, K);
  return Plane3D::through(pose.center(), pose.R * pc.n);
}

Line3D backproject_pixel(const Vec2& px, const CameraPose& pose, const Intrinsics& K) {
  return Line3D::from_point_direction(pose.center(), pose.R * K.unproject(px));
}

Line3D backproject_event(const Event& ev, const CameraPose& pose, const Intrinsics& K) {
  return backproject_pixel(Vec2(ev.x, ev.y), pose, K);
}

Eigen::Vector3d project_line(const Line3D& line_world, const CameraPose& pose, const Intrinsics& K) {
  const Vec3 d_c = pose.R.transpose() * line_world.d;
  const Vec3 m_c = pose.R.transpose() * (line_world.m - pose.t.cross(line_world.d));
  (void)d_c;
  Eigen::Vector3d l(m_c.x() / K.fx, m_c.y() / K.fy,
                    m_c.z() - K.cx * m_c.x() / K.fx - K.cy * m_c.y() / K.fy);
  const double ab = l.head<2>().norm();
  if (ab < 1e-15) throw DegenerateError("project_line: line passes through the camera center");
  return l / ab;
}

}  // namespace evline
