#include <Eigen/SVD>

#include "evline/geom.hpp"
#include "evline/kernels.hpp"
#include "helpers.hpp"

using namespace evline;

namespace {

// Independent evaluation of the embedded geodesic distance: build the
// embedding by hand, plain arccos of the singular values.
double oracle_distance(const Eigen::MatrixXd& A1, const Eigen::VectorXd& b1,
                       const Eigen::MatrixXd& A2, const Eigen::VectorXd& b2) {
  auto emb = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    const long n = A.rows(), k = A.cols();
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n + 1, k + 1);
    Y.topLeftCorner(n, k) = A;
    const double s = std::sqrt(1.0 + b.squaredNorm());
    for (long i = 0; i < n; ++i) Y(i, k) = b(i) / s;
    Y(n, k) = 1.0 / s;
    return Y;
  };
  Eigen::BDCSVD<Eigen::MatrixXd> svd(emb(A1, b1).transpose() * emb(A2, b2));
  double sum = 0;
  for (long i = 0; i < svd.singularValues().size(); ++i) {
    const double th = std::acos(std::min(1.0, svd.singularValues()(i)));
    sum += th * th;
  }
  return std::sqrt(sum);
}

Line3D random_line(std::mt19937_64& rng, double scale = 3.0) {
  return Line3D::from_point_direction(evtest::random_vec(rng, scale), evtest::random_unit(rng));
}

}  // namespace

TEST_SUITE("geom") {
  TEST_CASE("embed: zero displacement is block diagonal") {
    AffineSubspace s;
    s.basis = Eigen::MatrixXd::Identity(3, 2);
    s.displacement = Eigen::VectorXd::Zero(3);
    const auto Y = embed(s);
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(4, 3);
    expect.topLeftCorner(3, 2) = s.basis;
    expect(3, 2) = 1.0;
    CHECK((Y - expect).norm() == 0.0);
  }

  TEST_CASE("embed: offset line") {
    AffineSubspace s;
    s.basis = Eigen::Vector3d::UnitZ();
    s.displacement = Eigen::Vector3d(1, 0, 0);
    const auto Y = embed(s);
    CHECK((Y.col(1) - Eigen::Vector4d(1, 0, 0, 1) / std::sqrt(2.0)).norm() < 1e-15);
    CHECK((Y.transpose() * Y - Eigen::Matrix2d::Identity()).norm() < 1e-12);
    const auto l = Line3D::from_point_direction(Vec3::Zero(), Vec3::UnitX()).as_subspace();
    const auto Yl = embed(l);
    CHECK((Yl.col(0) - Eigen::Vector4d(1, 0, 0, 0)).norm() == 0.0);
    CHECK((Yl.col(1) - Eigen::Vector4d(0, 0, 0, 1)).norm() == 0.0);
  }

  TEST_CASE("embed rejects a non-orthogonal displacement") {
    AffineSubspace s;
    s.basis = Eigen::Vector3d::UnitZ();
    s.displacement = Eigen::Vector3d(0, 0, 1);
    CHECK_THROWS_AS(embed(s), std::invalid_argument);
  }

  TEST_CASE("principal angles examples") {
    Eigen::MatrixXd e1 = Eigen::Vector2d::UnitX(), e2 = Eigen::Vector2d::UnitY();
    CHECK(principal_angles(e1, e1)(0) == 0.0);
    CHECK(principal_angles(e1, e2)(0) == doctest::Approx(kPi / 2));
    Eigen::MatrixXd diag = Eigen::Vector2d(1, 1).normalized();
    CHECK(principal_angles(e1, diag)(0) == doctest::Approx(kPi / 4).epsilon(1e-12));
    Eigen::MatrixXd plane = Eigen::MatrixXd::Identity(3, 2);
    Eigen::MatrixXd l = Eigen::Vector3d(0, 1, 1).normalized();
    const auto a = principal_angles(l, plane);
    REQUIRE(a.size() == 1);
    CHECK(a(0) == doctest::Approx(kPi / 4));
  }

  TEST_CASE("graff_distance pseudometric properties") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
      const auto a = random_line(rng).as_subspace();
      const auto b = random_line(rng).as_subspace();
      const auto c = random_line(rng).as_subspace();
      const double ab = graff_distance(a, b), bc = graff_distance(b, c), ac = graff_distance(a, c);
      CHECK(ab >= 0.0);
      CHECK(ab == doctest::Approx(graff_distance(b, a)).epsilon(1e-12));
      CHECK(graff_distance(a, a) < 1e-12);
      CHECK(ac <= ab + bc + 1e-7);
    }
  }

  TEST_CASE("graff_distance matches an independent evaluation") {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 100; ++i) {
      const auto a = random_line(rng).as_subspace();
      const auto b = Plane3D::through(evtest::random_vec(rng, 2), evtest::random_unit(rng)).as_subspace();
      CHECK(graff_distance(a, b) ==
            doctest::Approx(oracle_distance(a.basis, a.displacement, b.basis, b.displacement))
                .epsilon(1e-9));
    }
    // Parallel lines through shifted points.
    const auto l1 = Line3D::from_point_direction({0, 1, 0}, Vec3::UnitX()).as_subspace();
    const auto l2 = Line3D::from_point_direction({0, 0, 2}, Vec3::UnitX()).as_subspace();
    CHECK(graff_distance(l1, l2) ==
          doctest::Approx(oracle_distance(l1.basis, l1.displacement, l2.basis, l2.displacement)));
  }

  TEST_CASE("graff_distance dimension mismatch") {
    AffineSubspace a, b;
    a.basis = Eigen::Vector3d::UnitX();
    a.displacement = Eigen::Vector3d::Zero();
    b.basis = Eigen::Vector2d::UnitX();
    b.displacement = Eigen::Vector2d::Zero();
    CHECK_THROWS_AS(graff_distance(a, b), std::invalid_argument);
  }

  TEST_CASE("tri_residual examples") {
    const Plane3D xy = Plane3D::through(Vec3(0, 0, 1), Vec3::UnitZ());
    const Line3D in = Line3D::from_point_direction({3, -1, 1}, Vec3(1, 2, 0));
    const auto r = tri_residual(in, xy);
    CHECK(r.r1.norm() < 1e-15);
    CHECK(r.r2.norm() < 1e-15);

    const Line3D perp = Line3D::from_point_direction({0, 0, 0}, Vec3::UnitZ());
    CHECK(tri_residual(perp, xy).r1.squaredNorm() == doctest::Approx(1.0));

    Eigen::Matrix<double, 3, 2> pi;
    pi << 1, 0, 0, 1, 0, 0;
    const auto raw = tri_residual_raw(Vec3::UnitZ(), Vec3::Zero(), pi, Vec3::Zero());
    CHECK(raw.r1.squaredNorm() == doctest::Approx(1.0));
    CHECK(raw.r2.norm() < 1e-15);
  }

  TEST_CASE("tri_residual decreases as a line is rotated into the plane") {
    const Plane3D p = Plane3D::through(Vec3(0, 0, 0.5), Vec3::UnitZ());
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 10; i >= 0; --i) {
      const double a = 0.1 * i;
      const Line3D l = Line3D::from_point_direction({0, 0, 0.5 + a}, Vec3(std::cos(a), 0, std::sin(a)));
      const double c = tri_residual(l, p).cost();
      CHECK(c < prev);
      prev = c;
    }
    CHECK(prev < 1e-20);
  }

  TEST_CASE("tri_residual is invariant to a joint translation") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 100; ++i) {
      const Line3D l = random_line(rng);
      const Plane3D p = Plane3D::through(evtest::random_vec(rng, 2), evtest::random_unit(rng));
      const Vec3 T = evtest::random_vec(rng, 10);
      const Vec3 ref = evtest::random_vec(rng, 3);
      const auto a = tri_residual(l, p, ref);
      const auto b = tri_residual(l.transformed(Mat3::Identity(), T), p.transformed(Mat3::Identity(), T),
                                  ref + T);
      CHECK((a.r1 - b.r1).norm() < 1e-9);
      CHECK((a.r2 - b.r2).norm() < 1e-9);
    }
  }

  TEST_CASE("ref_residual is invariant to a rigid motion of line and pose") {
    std::mt19937_64 rng(29);
    for (int i = 0; i < 100; ++i) {
      const Line3D l = random_line(rng);
      const Plane3D pc = Plane3D::through(Vec3::Zero(), evtest::random_unit(rng));
      const CameraPose pose{evtest::random_rotation(rng), evtest::random_vec(rng, 3), 0};
      const CameraPose G{evtest::random_rotation(rng), evtest::random_vec(rng, 10), 0};
      const auto a = ref_residual(pc, l, pose);
      const auto b = ref_residual(pc, l.transformed(G.R, G.t), G * pose);
      CHECK((a.r1 - b.r1).norm() < 1e-9);
      CHECK((a.r2 - b.r2).norm() < 1e-9);
    }
  }

  TEST_CASE("ref_residual: identity pose and rotation equivariance") {
    std::mt19937_64 rng(24);
    for (int i = 0; i < 50; ++i) {
      const Line3D l = random_line(rng);
      const Plane3D p = Plane3D::through(evtest::random_vec(rng, 2), evtest::random_unit(rng));
      const auto base = tri_residual(l, p);
      const auto id = ref_residual(p, l, CameraPose{});
      CHECK((base.r1 - id.r1).norm() < 1e-15);
      CHECK((base.r2 - id.r2).norm() < 1e-15);
      const Mat3 R0 = evtest::random_rotation(rng);
      CameraPose pose;
      pose.R = R0;
      const auto rot = ref_residual(p, l.transformed(R0, Vec3::Zero()), pose);
      CHECK((base.r1 - rot.r1).norm() < 1e-12);
      CHECK((base.r2 - rot.r2).norm() < 1e-12);
    }
  }

  TEST_CASE("ref_residual vanishes on consistent geometry") {
    const auto K = evtest::test_intrinsics();
    const auto pose = evtest::look_at({4, -3, 2}, {0, 0, 0});
    const Vec3 a(-0.5, 0.2, 0.1), b(0.6, -0.3, 0.4);
    LineSegment2D seg;
    seg.p1 = K.project(pose.to_camera(a));
    seg.p2 = K.project(pose.to_camera(b));
    const auto r = ref_residual(viewing_plane_cam(seg, K), Line3D::through(a, b), pose);
    CHECK(r.cost() < 1e-16);
  }

  TEST_CASE("grassmann kernel derivatives match central differences") {
    using J = ceres::Jet<double, 6>;
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 d = evtest::random_unit(rng), mvec = evtest::random_vec(rng, 2);
      const Vec3 m = mvec - d * d.dot(mvec);
      const Vec3 n = evtest::random_unit(rng);
      auto eval = [&](const Vec3& dd, const Vec3& mm) {
        double r[7];
        kernels::line_plane_residual_cam<double>(dd, mm, n, r);
        return Eigen::Map<Eigen::Matrix<double, 7, 1>>(r).eval();
      };
      kernels::V3<J> dj, mj;
      for (int k = 0; k < 3; ++k) {
        dj[k] = J(d[k], k);
        mj[k] = J(m[k], 3 + k);
      }
      J rj[7];
      kernels::line_plane_residual_cam<J>(dj, mj, n.cast<J>(), rj);
      const double h = 1e-6;
      for (int k = 0; k < 6; ++k) {
        Vec3 dp = d, dm = d, mp = m, mmn = m;
        if (k < 3) {
          dp[k] += h;
          dm[k] -= h;
        } else {
          mp[k - 3] += h;
          mmn[k - 3] -= h;
        }
        const Eigen::Matrix<double, 7, 1> fd = (eval(dp, mp) - eval(dm, mmn)) / (2 * h);
        Eigen::Matrix<double, 7, 1> ad;
        for (int i = 0; i < 7; ++i) ad[i] = rj[i].v[k];
        CHECK((ad - fd).norm() <= 1e-4 * std::max(1.0, ad.norm()));
      }
    }
  }

  TEST_CASE("plucker / orthonormal round trip") {
    std::mt19937_64 rng(26);
    for (int i = 0; i < 1000; ++i) {
      const Line3D l = random_line(rng, 5.0);
      const auto ol = plucker_to_orthonormal(l);
      CHECK(std::abs(ol.w1() * ol.w1() + ol.w2() * ol.w2() - 1.0) < 1e-15);
      const Mat3 U = ol.U();
      CHECK(is_rotation(U));
      const Line3D b = orthonormal_to_plucker(ol);
      CHECK((b.d - l.d).norm() < 1e-9);
      CHECK((b.m - l.m).norm() < 1e-9);
      CHECK(std::abs(b.d.dot(b.m)) <= 1e-12 * b.m.norm());
    }
  }

  TEST_CASE("unit-distance line has w1 = w2") {
    const Line3D l = Line3D::from_point_direction({0, 1, 0}, Vec3::UnitX());
    const auto ol = plucker_to_orthonormal(l);
    CHECK(ol.w1() == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(ol.w2() == doctest::Approx(1.0 / std::sqrt(2.0)));
  }

  TEST_CASE("degenerate origin line and distant line") {
    const Line3D o = Line3D::from_point_direction(Vec3::Zero(), Vec3(1, 1, 0));
    const auto ol = plucker_to_orthonormal(o);
    CHECK(ol.phi == 0.0);
    CHECK(is_rotation(ol.U()));
    const Line3D back = orthonormal_to_plucker(ol);
    CHECK(back.m.norm() == 0.0);
    CHECK((back.d - o.d).norm() < 1e-12);

    OrthonormalLine far{Vec3(0.1, 0.2, 0.3), kPi / 2 - 1e-6};
    const Line3D fl = orthonormal_to_plucker(far);
    CHECK(std::isfinite(fl.m.norm()));
    CHECK(fl.m.norm() == doctest::Approx(std::tan(kPi / 2 - 1e-6)));
    OrthonormalLine inf{Vec3::Zero(), kPi / 2};
    CHECK_THROWS_AS(orthonormal_to_plucker(inf), DegenerateError);
  }

  TEST_CASE("backproject_line through the principal point") {
    const auto K = evtest::test_intrinsics();
    LineSegment2D seg;
    seg.p1 = {K.cx - 50, K.cy};
    seg.p2 = {K.cx + 50, K.cy};
    const Plane3D p = backproject_line(seg, CameraPose{}, K);
    CHECK(std::abs(p.dist) < 1e-15);
    CHECK(std::abs(p.n.dot(Vec3::UnitZ())) < 1e-15);
    CHECK(std::abs(p.n.dot(Vec3::UnitX())) < 1e-15);
  }

  TEST_CASE("backproject_line round trip and translation invariance") {
    std::mt19937_64 rng(27);
    const auto K = evtest::test_intrinsics();
    const auto pose = evtest::look_at({3, 2, 1}, {0, 0, 0});
    LineSegment2D seg;
    seg.p1 = {40, 30};
    seg.p2 = {250, 200};
    const Plane3D p = backproject_line(seg, pose, K);
    const auto B = p.basis();
    for (int i = 0; i < 50; ++i) {
      std::uniform_real_distribution<double> u(-2, 2);
      const Vec3 x = p.displacement() + B * Vec2(u(rng), u(rng));
      const Vec3 xc = pose.to_camera(x);
      if (std::abs(xc.z()) < 1e-3) continue;
      CHECK(point_line_distance(K.project(xc), seg) < 1e-6);
    }
    // Moving the camera within the plane leaves the plane unchanged.
    CameraPose moved = pose;
    moved.t += B.col(0) * 0.7;
    LineSegment2D seg2;
    const Vec3 a = p.displacement() + B.col(0) * 5, b = p.displacement() + B.col(1) * 3;
    seg2.p1 = K.project(moved.to_camera(a + Vec3(0, 0, 0)));
    seg2.p2 = K.project(moved.to_camera(b));
    const Plane3D q = backproject_line(seg2, moved, K);
    CHECK(std::min((q.n - p.n).norm(), (q.n + p.n).norm()) < 1e-9);
    CHECK(std::abs(std::abs(q.dist) - std::abs(p.dist)) < 1e-9);
  }

  TEST_CASE("backproject_event rays") {
    const auto K = evtest::test_intrinsics();
    Event ev{int(K.cx), int(K.cy), 0, 1};
    const Line3D ray = backproject_event(ev, CameraPose{}, K);
    CHECK((ray.d - Vec3::UnitZ()).norm() < 1e-15);
    CHECK(ray.m.norm() < 1e-15);
    std::mt19937_64 rng(28);
    for (int i = 0; i < 50; ++i) {
      CameraPose pose{evtest::random_rotation(rng), evtest::random_vec(rng, 4), 0};
      const Vec2 px(std::uniform_real_distribution<double>(0, 319)(rng),
                    std::uniform_real_distribution<double>(0, 239)(rng));
      const Line3D r = backproject_pixel(px, pose, K);
      CHECK((r.m - pose.center().cross(r.d)).norm() < 1e-12);
      const Vec3 x = pose.center() + 3.0 * r.d;
      CHECK((K.project(pose.to_camera(x)) - px).norm() < 1e-9);
    }
  }

  TEST_CASE("event residual vanishes for pixels on the projection") {
    const auto K = evtest::test_intrinsics();
    const auto pose = evtest::look_at({4, -3, 2}, {0, 0, 0});
    const Line3D l = Line3D::through({-0.5, 0.2, 0.1}, {0.6, -0.3, 0.4});
    const Vec2 px = K.project(pose.to_camera(l.point_at(0.2)));
    const auto r = event_residual(l, px, pose, K);
    CHECK(r.cost() < 1e-20);
    const auto off = event_residual(l, px + Vec2(3, 3), pose, K);
    CHECK(off.r1.norm() > 1e-4);
    CHECK(off.r2.norm() < 1e-15);
  }

  TEST_CASE("project_line agrees with projected points") {
    const auto K = evtest::test_intrinsics();
    const auto pose = evtest::look_at({4, -3, 2}, {0, 0, 0});
    const Line3D l = Line3D::through({-0.5, 0.2, 0.1}, {0.6, -0.3, 0.4});
    const auto h = project_line(l, pose, K);
    for (double s : {-1.0, 0.0, 0.5}) {
      const Vec2 px = K.project(pose.to_camera(l.point_at(s)));
      CHECK(std::abs(h.x() * px.x() + h.y() * px.y() + h.z()) < 1e-9);
    }
  }

  TEST_CASE("2D segment helpers") {
    LineSegment2D a;
    a.p1 = {0, 0};
    a.p2 = {10, 0};
    CHECK(point_line_distance({5, 3}, a) == doctest::Approx(3));
    CHECK(point_segment_distance({13, 4}, a) == doctest::Approx(5));
    CHECK(project_onto_line({20, 2}, a).isApprox(Vec2(20, 0)));
    LineSegment2D b;
    b.p1 = {0, 0};
    b.p2 = {0, -4};
    CHECK(line_angle(a, b) == doctest::Approx(kPi / 2));
    const auto h = homogeneous_line(a);
    CHECK(std::abs(h.dot(Eigen::Vector3d(7, 0, 1))) < 1e-15);
  }
}
