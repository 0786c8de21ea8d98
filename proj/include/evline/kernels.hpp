#pragma once

// Scalar-templated residual kernels shared by the closed-form evaluators in
// geom.cpp and the automatic-differentiation paths of the optimizer.

#include <ceres/jet.h>

#include <Eigen/Core>
#include <cmath>

namespace evline::kernels {

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using M3 = Eigen::Matrix<T, 3, 3>;

inline double value_of(double x) { return x; }
template <typename T, int N>
double value_of(const ceres::Jet<T, N>& x) {
  return x.a;
}

template <typename T>
M3<T> skew(const V3<T>& w) {
  M3<T> S;
  S << T(0), -w.z(), w.y(), w.z(), T(0), -w.x(), -w.y(), w.x(), T(0);
  return S;
}

/// Rodrigues formula; second-order expansion near zero keeps derivatives exact at 0.
template <typename T>
M3<T> so3_exp(const V3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const M3<T> K = skew(w);
  const T th2 = w.squaredNorm();
  if (value_of(th2) < 1e-16) return M3<T>::Identity() + K + T(0.5) * K * K;
  const T th = sqrt(th2);
  return M3<T>::Identity() + (sin(th) / th) * K + ((T(1) - cos(th)) / th2) * K * K;
}

/// Literal line-to-plane projection residuals.
///   r[0..2] = P_pi v - v
///   r[3..6] = Y Yᵀ c~ - c~, Y the embedded basis of span(pi) + d0 and
///             c~ = (c0, 1) / sqrt(1 + |c0|²)
/// The plane enters through its 3x3 projector P_pi = pi piᵀ and displacement d0.
template <typename T>
void grassmann_terms(const V3<T>& v, const V3<T>& c0, const M3<T>& P_pi, const V3<T>& d0, T* r) {
  using std::sqrt;
  const V3<T> r1 = P_pi * v - v;
  const T s2 = T(1) + d0.squaredNorm();
  const T cn = sqrt(T(1) + c0.squaredNorm());
  const V3<T> ct = c0 / cn;
  const T ch = T(1) / cn;
  const T proj = (d0.dot(ct) + ch) / s2;
  const V3<T> top = P_pi * ct + d0 * proj;
  r[0] = r1.x();
  r[1] = r1.y();
  r[2] = r1.z();
  r[3] = top.x() - ct.x();
  r[4] = top.y() - ct.y();
  r[5] = top.z() - ct.z();
  r[6] = proj - ch;
}

/// World line (d, m) expressed in the frame of a camera-to-world pose (R, t).
template <typename T>
void line_to_camera(const V3<T>& d, const V3<T>& m, const M3<T>& R, const V3<T>& t, V3<T>& d_c,
                    V3<T>& m_c) {
  d_c = R.transpose() * d;
  m_c = R.transpose() * (m - t.cross(d));
}

/// Residual of a camera-frame line against a viewing plane through the
/// camera center with unit normal n, after shifting both so that the line
/// passes through the origin. Writes 7 values.
template <typename T>
void line_plane_residual_cam(const V3<T>& d_c, const V3<T>& m_c, const V3<T>& n, T* r) {
  const V3<T> anchor = d_c.cross(m_c);
  const M3<T> P = M3<T>::Identity() - n * n.transpose();
  const V3<T> d0 = -(n.dot(anchor)) * n;
  grassmann_terms<T>(d_c, V3<T>::Zero(), P, d0, r);
}

/// Unit normal of the plane through the camera center and a camera-frame line.
template <typename T>
V3<T> line_plane_normal_cam(const V3<T>& m_c) {
  using std::sqrt;
  return m_c / sqrt(m_c.squaredNorm());
}

/// Event residual r1 = P_pi v - v = -(n·v) n for a unit bearing v and the
/// plane through the camera center and the line (normal n).
template <typename T>
V3<T> event_r1(const V3<T>& n, const Eigen::Vector3d& bearing) {
  const V3<T> v = bearing.cast<T>();
  return -(n.dot(v)) * n;
}

/// Orthonormal line (U0 Exp(dtheta), phi0 + dphi) to Plücker (d, m).
template <typename T>
void orthonormal_to_plucker(const Eigen::Matrix3d& U0, double phi0, const T* delta, V3<T>& d,
                            V3<T>& m) {
  using std::cos;
  using std::sin;
  const V3<T> w(delta[0], delta[1], delta[2]);
  const M3<T> U = U0.cast<T>() * so3_exp<T>(w);
  const T phi = T(phi0) + delta[3];
  d = U.col(0);
  m = (sin(phi) / cos(phi)) * U.col(1);
}

/// Camera-to-world pose perturbed as (R0 Exp(dr), t0 + dt).
template <typename T>
void perturb_pose(const Eigen::Matrix3d& R0, const Eigen::Vector3d& t0, const T* delta, M3<T>& R,
                  V3<T>& t) {
  const V3<T> w(delta[0], delta[1], delta[2]);
  R = R0.cast<T>() * so3_exp<T>(w);
  t = t0.cast<T>() + V3<T>(delta[3], delta[4], delta[5]);
}

}  // namespace evline::kernels
