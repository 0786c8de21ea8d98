#pragma once

#include <Eigen/Core>

#include <optional>
#include <utility>

#include "evline/camera.hpp"
#include "evline/common.hpp"
#include "evline/events.hpp"
#include "evline/lines2d.hpp"

namespace evline {

// ---------------------------------------------------------------------------
// Affine Grassmannian
// ---------------------------------------------------------------------------

/// k-dimensional affine subspace span(basis) + displacement of R^n, with an
/// orthonormal n x k basis and the displacement orthogonal to it.
struct AffineSubspace {
  Eigen::MatrixXd basis;
  Eigen::VectorXd displacement;

  int k() const { return static_cast<int>(basis.cols()); }
  int n() const { return static_cast<int>(basis.rows()); }
  /// Throws std::invalid_argument unless BᵀB = I and Bᵀb0 = 0 within tol.
  void validate(double tol = 1e-9) const;
};

/// Orthonormal (n+1) x (k+1) basis of the linear subspace the affine
/// subspace maps to one dimension up:
///   [ A  b0 / sqrt(1 + |b0|²) ]
///   [ 0   1 / sqrt(1 + |b0|²) ]
Eigen::MatrixXd embed(const AffineSubspace& sub);

/// Principal angles between span(Y1) and span(Y2), both with orthonormal
/// columns. Returns min(k, l) angles ordered by descending singular value
/// (ascending angle). Singular values are clamped to [0, 1].
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& Y1, const Eigen::MatrixXd& Y2);

/// Geodesic distance sqrt(sum theta_i²) between the embedded subspaces.
double graff_distance(const AffineSubspace& a, const AffineSubspace& b);

// ---------------------------------------------------------------------------
// Lines and planes in R³
// ---------------------------------------------------------------------------

/// Infinite 3D line in Plücker coordinates: unit direction d and moment
/// m = p x d for any point p on the line. Optionally trimmed to a segment.
struct Line3D {
  Vec3 d = Vec3::UnitX();
  Vec3 m = Vec3::Zero();
  std::optional<std::pair<Vec3, Vec3>> endpoints;

  static Line3D through(const Vec3& a, const Vec3& b);
  static Line3D from_point_direction(const Vec3& p, const Vec3& dir);

  /// Point of the line closest to the origin.
  Vec3 anchor() const { return d.cross(m); }
  Vec3 closest_point(const Vec3& x) const;
  double distance(const Vec3& x) const;
  /// Signed coordinate of a point's projection along d, measured from anchor().
  double coordinate(const Vec3& x) const { return d.dot(x); }
  Vec3 point_at(double s) const { return anchor() + s * d; }
  /// Image of the line under x -> R x + t (endpoints follow).
  Line3D transformed(const Mat3& R, const Vec3& t) const;
  AffineSubspace as_subspace() const;
};

/// Plane {x : n·x + dist = 0} with unit normal.
struct Plane3D {
  Vec3 n = Vec3::UnitZ();
  double dist = 0.0;

  static Plane3D through(const Vec3& point, const Vec3& normal);
  Eigen::Matrix<double, 3, 2> basis() const;
  Vec3 displacement() const { return -dist * n; }
  double signed_distance(const Vec3& x) const { return n.dot(x) + dist; }
  Plane3D transformed(const Mat3& R, const Vec3& t) const;
  AffineSubspace as_subspace() const;
};

/// Intersection line of two planes. Throws DegenerateError when the
/// normals are within min_angle_rad of parallel.
Line3D intersect_planes(const Plane3D& a, const Plane3D& b, double min_angle_rad = 1e-9);

/// Minimal 4-DoF line parameterization: U in SO(3) stored as its rotation
/// vector, and W in SO(2) stored as the angle phi with (w1, w2) = (cos, sin).
struct OrthonormalLine {
  Vec3 u_log = Vec3::Zero();
  double phi = 0.0;

  Mat3 U() const { return so3_exp(u_log); }
  double w1() const;
  double w2() const;
};

/// U = (d, m/|m|, d x m/|d x m|), w1 = 1/sqrt(1+|m|²), w2 = |m|/sqrt(1+|m|²).
/// Lines through the origin (|m| <= eps) take an arbitrary unit vector
/// orthogonal to d as the second column and phi = 0.
OrthonormalLine plucker_to_orthonormal(const Line3D& line, double eps = 1e-12);

/// d = u1, m = (w2 / w1) u2. Throws DegenerateError when w1 <= eps.
Line3D orthonormal_to_plucker(const OrthonormalLine& ol, double eps = 1e-12);

// ---------------------------------------------------------------------------
// Line-to-plane Grassmann residuals
// ---------------------------------------------------------------------------

struct GrassmannResidual {
  Vec3 r1 = Vec3::Zero();  ///< P_pi v - v
  Vec4 r2 = Vec4::Zero();  ///< P_z(pi + d0) c~0 - c~0
  double cost() const { return r1.squaredNorm() + r2.squaredNorm(); }
};

/// The two projection residuals for line v + c0 against plane span(pi) + d0,
/// evaluated on the primitives exactly as given. c~0 = (c0, 1)/sqrt(1+|c0|²).
GrassmannResidual tri_residual_raw(const Vec3& v, const Vec3& c0,
                                   const Eigen::Matrix<double, 3, 2>& pi, const Vec3& d0);

/// Line-to-plane residual after translating both primitives by -p, p the
/// line's point closest to `ref`, so that the line passes through the
/// origin. Zero iff the line lies in the plane. Translating line, plane and
/// ref together leaves the result unchanged; viewing planes use the camera
/// center as ref.
GrassmannResidual tri_residual(const Line3D& line, const Plane3D& plane,
                               const Vec3& ref = Vec3::Zero());

/// Residual of a plane given in camera coordinates against a world line,
/// with the camera pose acting on the plane. Evaluated in the camera frame,
/// so it is unchanged by any rigid motion applied to both the line and the
/// pose. Equals tri_residual at the identity pose.
GrassmannResidual ref_residual(const Plane3D& plane_cam, const Line3D& line_world,
                               const CameraPose& pose);

/// Event residual: the pixel's viewing ray against the plane through the
/// camera center and the line. Only r1 can be nonzero since both pass
/// through the camera center.
GrassmannResidual event_residual(const Line3D& line_world, const Vec2& pixel,
                                 const CameraPose& pose, const Intrinsics& K);

// ---------------------------------------------------------------------------
// Back-projection
// ---------------------------------------------------------------------------

/// Camera-frame plane through the optical center and the image segment.
Plane3D viewing_plane_cam(const LineSegment2D& seg, const Intrinsics& K);
/// World-frame viewing plane of a segment. Throws DegenerateError for a
/// zero-length segment.
Plane3D backproject_line(const LineSegment2D& seg, const CameraPose& pose, const Intrinsics& K);
/// World-frame ray from the camera center through the event's pixel.
Line3D backproject_event(const Event& ev, const CameraPose& pose, const Intrinsics& K);
Line3D backproject_pixel(const Vec2& px, const CameraPose& pose, const Intrinsics& K);

/// Projection of a 3D line into the image as a homogeneous 2D line
/// (a, b, c), normalized so that (a, b) is unit. Throws DegenerateError
/// when the line passes through the camera center.
Eigen::Vector3d project_line(const Line3D& line_world, const CameraPose& pose, const Intrinsics& K);

}  // namespace evline
