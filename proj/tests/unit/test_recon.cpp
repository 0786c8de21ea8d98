#include "evline/recon.hpp"
#include "evline/synth.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <fstream>

using namespace evline;

namespace {

double dir_err_deg(const Line3D& a, const Line3D& b) {
  return rad2deg(std::acos(std::min(1.0, std::abs(a.d.dot(b.d)))));
}

// Moment difference after aligning the direction signs.
double moment_err(const Line3D& a, const Line3D& b) {
  return a.d.dot(b.d) >= 0 ? (a.m - b.m).norm() : (a.m + b.m).norm();
}

// Cameras on a ring of the given radius around the origin, looking at it.
std::vector<CameraPose> ring(int n, double radius, double height = 2.0, double arc = kPi) {
  std::vector<CameraPose> out;
  for (int k = 0; k < n; ++k) {
    const double a = arc * (k + 0.5) / n;
    out.push_back(evtest::look_at(Vec3(radius * std::cos(a), radius * std::sin(a), height), Vec3::Zero()));
    out.back().stamp = k;
  }
  return out;
}

// Projection of the segment a-b, or nothing when not fully in view.
std::optional<LineSegment2D> observe(const Vec3& a, const Vec3& b, const CameraPose& pose,
                                     const Intrinsics& K) {
  const Vec3 ca = pose.to_camera(a), cb = pose.to_camera(b);
  if (ca.z() < 0.1 || cb.z() < 0.1) return std::nullopt;
  LineSegment2D s;
  s.p1 = K.project(ca);
  s.p2 = K.project(cb);
  if (!K.contains(s.p1) || !K.contains(s.p2) || s.length() < 10) return std::nullopt;
  return s;
}

// Map line with exact observations and `n_ev` event pixels on each.
MapLine observed_line(const Vec3& a, const Vec3& b, std::span<const CameraPose> poses,
                      const Intrinsics& K, int n_ev = 20) {
  MapLine m;
  m.line = Line3D::through(a, b);
  m.line.endpoints = std::make_pair(a, b);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto s = observe(a, b, poses[i], K);
    if (!s) continue;
    LineObservation o;
    o.pose_index = i;
    o.segment = *s;
    for (int k = 0; k < n_ev; ++k) o.event_pixels.push_back(s->p1 + (s->p2 - s->p1) * ((k + 0.5) / n_ev));
    m.observations.push_back(std::move(o));
  }
  return m;
}

Vec3 random_point(std::mt19937_64& rng, double s) { return evtest::random_vec(rng, s); }

}  // namespace

TEST_SUITE("recon") {
  TEST_CASE("two-view triangulation of exact projections") {
    const auto K = evtest::test_intrinsics();
    std::mt19937_64 rng(1);
    int n = 0;
    for (int trial = 0; trial < 300 && n < 100; ++trial) {
      const Vec3 a = random_point(rng, 2.0), b = random_point(rng, 2.0);
      const auto pa = evtest::look_at(Vec3(0, -12, 1), Vec3::Zero());
      const auto pb = evtest::look_at(Vec3(5, -10, 3), Vec3::Zero());
      auto la = observe(a, b, pa, K), lb = observe(a, b, pb, K);
      if (!la || !lb) continue;
      Line3D L;
      try {
        L = triangulate_pair(*la, pa, *lb, pb, K);
      } catch (const DegenerateError&) {
        continue;  // epipolar-plane lines
      }
      ++n;
      const Line3D gt = Line3D::through(a, b);
      CHECK(dir_err_deg(L, gt) < rad2deg(1e-6));
      CHECK(moment_err(L, gt) < 1e-6);
      CHECK(std::abs(L.d.dot(L.m)) < 1e-12);
    }
    CHECK(n >= 90);
  }

  TEST_CASE("pure rotation pair is degenerate") {
    const auto K = evtest::test_intrinsics();
    const auto pa = evtest::look_at(Vec3(0, -12, 1), Vec3::Zero());
    auto pb = pa;
    pb.R = pa.R * so3_exp(Vec3(0, 0.05, 0));
    LineSegment2D s;
    s.p1 = {50, 60};
    s.p2 = {250, 90};
    CHECK_THROWS_AS(triangulate_pair(s, pa, s, pa, K), DegenerateError);
    // same camera center: both viewing planes contain the center and the same world line
    const Vec3 a(-1, 0, 0), b(1, 0.5, 0.3);
    auto la = observe(a, b, pa, K), lb = observe(a, b, pb, K);
    REQUIRE(la);
    REQUIRE(lb);
    CHECK_THROWS_AS(triangulate_pair(*la, pa, *lb, pb, K), DegenerateError);
  }

  TEST_CASE("noisy two-view triangulation") {
    // cube-experiment geometry: side-10 volume seen from 25 units, 60 degree baseline
    const auto K = preset_intrinsics("cube");
    const auto pa = evtest::look_at(Vec3(0, -25, 2), Vec3::Zero());
    const auto pb = evtest::look_at(Vec3(25 * std::sin(kPi / 3), -25 * std::cos(kPi / 3), 4), Vec3::Zero());
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<double> errs;
    while (errs.size() < 100) {
      const Vec3 a = random_point(rng, 5.0), b = random_point(rng, 5.0);
      if ((a - b).norm() < 5.0) continue;
      auto la = observe(a, b, pa, K), lb = observe(a, b, pb, K);
      if (!la || !lb) continue;
      for (auto* s : {&*la, &*lb}) {
        s->p1 += Vec2(g(rng), g(rng));
        s->p2 += Vec2(g(rng), g(rng));
      }
      try {
        errs.push_back(dir_err_deg(triangulate_pair(*la, pa, *lb, pb, K), Line3D::through(a, b)));
      } catch (const DegenerateError&) {
      }
    }
    std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
    CHECK(errs[50] < 1.0);
  }

  TEST_CASE("clean twelve-view track") {
    const auto K = evtest::test_intrinsics();
    const auto poses = ring(12, 12.0);
    const Vec3 a(-1.5, 0.3, -0.5), b(1.2, -0.4, 0.8);
    const auto m = observed_line(a, b, poses, K);
    REQUIRE(m.observations.size() == 12);
    const auto h = ransac_triangulate(m.observations, poses, K, ReconConfig{}, 7);
    REQUIRE(h);
    CHECK(h->inliers.size() == 12);
    CHECK(h->p != h->q);
    CHECK(dir_err_deg(h->line, m.line) < rad2deg(1e-4));
    CHECK(moment_err(h->line, m.line) < 1e-4);
  }

  TEST_CASE("outlier views are excluded") {
    const auto K = evtest::test_intrinsics();
    const auto poses = ring(13, 12.0);
    const Vec3 a(-1.5, 0.3, -0.5), b(1.2, -0.4, 0.8);
    auto m = observed_line(a, b, poses, K);
    REQUIRE(m.observations.size() == 13);
    // views 2, 6 and 10 observe a different line
    const Vec3 c(-1.0, 1.5, 1.0), d(1.0, 1.2, -1.2);
    for (std::size_t k : {2u, 6u, 10u}) {
      auto s = observe(c, d, poses[k], K);
      REQUIRE(s);
      m.observations[k].segment = *s;
    }
    const auto h = ransac_triangulate(m.observations, poses, K, ReconConfig{}, 3);
    REQUIRE(h);
    CHECK(h->inliers == std::vector<std::size_t>{0, 1, 3, 4, 5, 7, 8, 9, 11, 12});
    CHECK(dir_err_deg(h->line, m.line) < 1e-3);
  }

  TEST_CASE("too few views are rejected") {
    const auto K = evtest::test_intrinsics();
    const auto poses = ring(8, 12.0);
    const auto m = observed_line(Vec3(-1.5, 0.3, -0.5), Vec3(1.2, -0.4, 0.8), poses, K);
    REQUIRE(m.observations.size() == 8);
    CHECK_FALSE(ransac_triangulate(m.observations, poses, K, ReconConfig{}, 1));
    ReconConfig loose;
    loose.min_inliers = 8;
    CHECK(ransac_triangulate(m.observations, poses, K, loose, 1));
  }

  TEST_CASE("long tracks sample random pairs deterministically") {
    const auto K = evtest::test_intrinsics();
    const auto poses = ring(30, 12.0);
    const auto m = observed_line(Vec3(-1.5, 0.3, -0.5), Vec3(1.2, -0.4, 0.8), poses, K);
    REQUIRE(m.observations.size() > 15);
    const auto h1 = ransac_triangulate(m.observations, poses, K, ReconConfig{}, 9);
    const auto h2 = ransac_triangulate(m.observations, poses, K, ReconConfig{}, 9);
    REQUIRE(h1);
    REQUIRE(h2);
    CHECK(h1->p == h2->p);
    CHECK(h1->q == h2->q);
    CHECK(h1->inliers.size() == m.observations.size());
  }

  TEST_CASE("auxiliary distances vanish for exact observations") {
    const auto K = evtest::test_intrinsics();
    const auto pose = evtest::look_at(Vec3(0, -12, 1), Vec3::Zero());
    const Vec3 a(-1, 0, 0.2), b(1, 0.5, 0.3);
    const auto s = observe(a, b, pose, K);
    REQUIRE(s);
    const Line3D L = Line3D::through(a, b);
    const auto d = aux_distances(L, *s, pose, K);
    CHECK(d.angle_3d_deg < 1e-6);
    CHECK(d.angle_2d_deg < 1e-6);
    CHECK(d.perp_px < 1e-9);
    CHECK(d.persp_px < 1e-6);
    CHECK(view_cost(L, *s, pose, K) < 1e-20);
    // a 3 px parallel shift fails the perpendicular test
    LineSegment2D moved = *s;
    moved.p1 += 3.0 * s->normal();
    moved.p2 += 3.0 * s->normal();
    CHECK(aux_distances(L, moved, pose, K).perp_px == doctest::Approx(3.0).epsilon(1e-6));
    CHECK_FALSE(is_inlier_view(L, moved, pose, K, ReconConfig{}));
    CHECK(is_inlier_view(L, *s, pose, K, ReconConfig{}));
  }

  TEST_CASE("endpoint trimming") {
    const auto K = evtest::test_intrinsics();
    const auto poses = ring(6, 5.0);
    const Vec3 a(-0.5, 0.1, 0.0), b(0.4, -0.2, 0.5);  // |a - b| ~ 1
    auto m = observed_line(a, b, poses, K);
    REQUIRE(m.observations.size() == 6);
    Line3D L = Line3D::through(a, b);

    SUBCASE("exact observations") {
      const auto t = trim_endpoints(L, m.observations, poses, K);
      REQUIRE(t);
      const auto [p, q] = *t->endpoints;
      const bool same = (p - a).norm() < (p - b).norm();
      CHECK(((same ? p : q) - a).norm() < 1e-6);
      CHECK(((same ? q : p) - b).norm() < 1e-6);
    }
    SUBCASE("single observation gives that view's candidates") {
      const auto t = trim_endpoints(L, std::span(m.observations).first(1), poses, K);
      REQUIRE(t);
      const auto [p, q] = *t->endpoints;
      CHECK(std::min((p - a).norm(), (p - b).norm()) < 1e-6);
      CHECK(std::min((q - a).norm(), (q - b).norm()) < 1e-6);
    }
    SUBCASE("one truncated observation") {
      // view 2 sees only the first 40% of the segment
      const Vec3 cut = a + 0.4 * (b - a);
      auto s = observe(a, cut, poses[2], K);
      REQUIRE(s);
      m.observations[2].segment = *s;
      const auto t = trim_endpoints(L, m.observations, poses, K);
      REQUIRE(t);
      const auto [p, q] = *t->endpoints;
      const double lo = std::min(L.coordinate(p), L.coordinate(q));
      const double hi = std::max(L.coordinate(p), L.coordinate(q));
      const double ca = L.coordinate(a), cc = L.coordinate(cut);
      CHECK(lo <= std::min(ca, cc) + 1e-9);
      CHECK(hi >= std::max(ca, cc) - 1e-9);
      CHECK(hi - lo == doctest::Approx((b - a).norm()).epsilon(1e-6));
    }
    SUBCASE("no observations") {
      CHECK_FALSE(trim_endpoints(L, {}, poses, K));
    }
  }

  TEST_CASE("duplicate removal") {
    const Vec3 centroid(0, 0, 0);
    auto make = [](const Vec3& a, const Vec3& b) {
      MapLine m;
      m.line = Line3D::through(a, b);
      m.line.endpoints = std::make_pair(a, b);
      return m;
    };
    ReconConfig cfg;
    CHECK(dedup_lines({}, centroid, 10.0, cfg).empty());

    std::vector<MapLine> dup = {make(Vec3(0, 5, 0), Vec3(2, 5, 0)),
                                make(Vec3(0.01, 5.01, 0), Vec3(2.2, 5.0, 0.01))};
    auto out = dedup_lines(dup, centroid, 10.0, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].line.endpoints->second.x() == doctest::Approx(2.2));  // the longer one

    std::vector<MapLine> par = {make(Vec3(0, 5, 0), Vec3(2, 5, 0)), make(Vec3(0, 5, 1), Vec3(2, 5, 1))};
    CHECK(dedup_lines(par, centroid, 10.0, cfg).size() == 2);

    std::vector<MapLine> no_ends = {MapLine{}};
    CHECK_THROWS(dedup_lines(no_ends, centroid, 10.0, cfg));
  }

  TEST_CASE("optimization keeps an exact solution fixed") {
    const auto K = evtest::test_intrinsics();
    auto poses = ring(8, 12.0);
    std::vector<MapLine> lines = {observed_line(Vec3(-1.5, 0.3, -0.5), Vec3(1.2, -0.4, 0.8), poses, K),
                                  observed_line(Vec3(-1, -1, 1), Vec3(1, 1, 1), poses, K),
                                  observed_line(Vec3(0.5, -1, -1), Vec3(0.5, 1, 0.5), poses, K)};
    const auto before_lines = lines;
    const auto before_poses = poses;
    OptimizeOptions opt;
    opt.refine_poses = true;
    const auto rep = optimize(lines, poses, K, ReconConfig{}, opt);
    CHECK(rep.final_cost < 1e-10);
    REQUIRE(lines.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(dir_err_deg(lines[j].line, before_lines[j].line) < rad2deg(1e-8));
      CHECK(moment_err(lines[j].line, before_lines[j].line) < 1e-8);
    }
    for (std::size_t i = 0; i < poses.size(); ++i) {
      CHECK((poses[i].t - before_poses[i].t).norm() < 1e-8);
      CHECK(rotation_angle(poses[i].R, before_poses[i].R) < 1e-8);
    }
  }

  TEST_CASE("perturbed lines converge back with fixed poses") {
    const auto K = evtest::test_intrinsics();
    auto poses = ring(10, 12.0);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      Vec3 a, b;
      MapLine m;
      do {
        a = random_point(rng, 1.5);
        b = random_point(rng, 1.5);
        if ((a - b).norm() < 1.5) continue;
        m = observed_line(a, b, poses, K);
      } while (m.observations.size() < 6);
      const Line3D gt = m.line;
      // 1 degree about a random axis through the midpoint and a 1% shift
      const Vec3 mid = 0.5 * (a + b);
      const Vec3 axis = gt.d.cross(evtest::random_unit(rng)).normalized();
      const Mat3 R = so3_exp(axis * deg2rad(1.0));
      const Vec3 shift = 0.01 * mid.norm() * gt.d.cross(axis).normalized();
      m.line = Line3D::through(R * (a - mid) + mid + shift, R * (b - mid) + mid + shift);
      std::vector<MapLine> lines = {m};
      auto ps = poses;
      for (auto variant : {CostVariant::kFull, CostVariant::kLineOnly}) {
        auto ls = lines;
        OptimizeOptions opt;
        opt.variant = variant;
        const auto rep = optimize(ls, ps, K, ReconConfig{}, opt);
        REQUIRE(ls.size() == 1);
        CHECK(dir_err_deg(ls[0].line, gt) < 0.1);
        CHECK((ls[0].line.closest_point(mid) - mid).norm() < 0.001 * mid.norm() + 1e-6);
        for (std::size_t k = 1; k < rep.cost_history.size(); ++k)
          CHECK(rep.cost_history[k] <= rep.cost_history[k - 1]);
      }
    }
  }

  TEST_CASE("cost gradient matches finite differences") {
    const auto K = evtest::test_intrinsics();
    const auto gt_poses = ring(5, 12.0);
    std::mt19937_64 rng(8);
    std::vector<MapLine> lines = {observed_line(Vec3(-1.5, 0.3, -0.5), Vec3(1.2, -0.4, 0.8), gt_poses, K, 10),
                                  observed_line(Vec3(-1, -1, 1), Vec3(1, 1, 1), gt_poses, K, 10)};
    // move the poses so that the residuals are nonzero
    auto poses = gt_poses;
    for (std::size_t i = 1; i < poses.size(); ++i) {
      poses[i].R = poses[i].R * so3_exp(evtest::random_vec(rng, 0.01));
      poses[i].t += evtest::random_vec(rng, 0.05);
    }
    for (auto variant : {CostVariant::kFull, CostVariant::kLineOnly, CostVariant::kReprojection}) {
      OptimizeOptions opt;
      opt.variant = variant;
      opt.refine_poses = true;
      const ReconConfig cfg;
      const auto cg = evaluate_cost(lines, poses, K, cfg, opt);
      REQUIRE(cg.cost > 0);
      const Eigen::Index n = cg.gradient.size();
      REQUIRE(n == 8 + 6 * 4);
      const double h = 1e-6;
      Eigen::VectorXd fd(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
        auto lp = lines, lm = lines;
        auto pp = poses, pm = poses;
        step[k] = h;
        apply_step(lp, pp, step, opt);
        step[k] = -h;
        apply_step(lm, pm, step, opt);
        fd[k] = (evaluate_cost(lp, pp, K, cfg, opt).cost - evaluate_cost(lm, pm, K, cfg, opt).cost) / (2 * h);
      }
      CHECK((fd - cg.gradient).norm() / cg.gradient.norm() < 1e-4);
      // the event term on its own, pose block only
      if (variant == CostVariant::kFull) {
        OptimizeOptions line_only = opt;
        line_only.variant = CostVariant::kLineOnly;
        const auto lg = evaluate_cost(lines, poses, K, cfg, line_only);
        const Eigen::VectorXd ev = (cg.gradient - lg.gradient).tail(24);
        Eigen::VectorXd ev_fd = fd.tail(24);
        for (Eigen::Index k = 0; k < 24; ++k) {
          Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
          auto lp = lines, lm = lines;
          auto pp = poses, pm = poses;
          step[8 + k] = h;
          apply_step(lp, pp, step, line_only);
          step[8 + k] = -h;
          apply_step(lm, pm, step, line_only);
          ev_fd[k] -= (evaluate_cost(lp, pp, K, cfg, line_only).cost -
                       evaluate_cost(lm, pm, K, cfg, line_only).cost) / (2 * h);
        }
        CHECK((ev_fd - ev).norm() / ev.norm() < 1e-4);
      }
    }
  }

  TEST_CASE("rigid motion of the whole scene leaves the cost unchanged") {
    const auto K = evtest::test_intrinsics();
    const auto gt_poses = ring(6, 12.0);
    std::mt19937_64 rng(10);
    std::vector<MapLine> lines = {observed_line(Vec3(-1.5, 0.3, -0.5), Vec3(1.2, -0.4, 0.8), gt_poses, K, 10),
                                  observed_line(Vec3(-1, -1, 1), Vec3(1, 1, 1), gt_poses, K, 10)};
    auto poses = gt_poses;
    for (auto& p : poses) p.t += evtest::random_vec(rng, 0.05);
    for (auto& l : lines) l.line.m += l.line.d.cross(evtest::random_unit(rng)) * 0.01;
    const Mat3 R = evtest::random_rotation(rng);
    const Vec3 t = evtest::random_vec(rng, 5.0);
    auto lines2 = lines;
    auto poses2 = poses;
    for (auto& l : lines2) l.line = l.line.transformed(R, t);
    for (auto& p : poses2) {
      p.R = R * p.R;
      p.t = R * p.t + t;
    }
    for (auto variant : {CostVariant::kFull, CostVariant::kLineOnly, CostVariant::kReprojection}) {
      OptimizeOptions opt;
      opt.variant = variant;
      const double c1 = evaluate_cost(lines, poses, K, ReconConfig{}, opt).cost;
      const double c2 = evaluate_cost(lines2, poses2, K, ReconConfig{}, opt).cost;
      CHECK(c1 > 0);
      CHECK(std::abs(c1 - c2) < 1e-9 * std::max(1.0, c1));
    }
  }

  TEST_CASE("pose refinement reduces trajectory error") {
    const auto K = evtest::test_intrinsics();
    const auto gt_poses = ring(12, 12.0, 2.0, kPi / 2);
    std::vector<MapLine> lines;
    std::mt19937_64 rng(12);
    while (lines.size() < 12) {
      const Vec3 a = random_point(rng, 2.0), b = random_point(rng, 2.0);
      if ((a - b).norm() < 1.5) continue;
      auto m = observed_line(a, b, gt_poses, K, 30);
      if (m.observations.size() == gt_poses.size()) lines.push_back(std::move(m));
    }
    auto poses = gt_poses;
    for (std::size_t i = 1; i < poses.size(); ++i) {
      poses[i].R = poses[i].R * so3_exp(evtest::random_vec(rng, deg2rad(1.0)));
      poses[i].t += evtest::random_vec(rng, 0.2);
    }
    auto err = [&](const std::vector<CameraPose>& ps) {
      double s = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) s += (ps[i].t - gt_poses[i].t).squaredNorm();
      return std::sqrt(s / ps.size());
    };
    const double before = err(poses);
    OptimizeOptions opt;
    opt.refine_poses = true;
    opt.refine_lines = false;
    const auto rep = optimize(lines, poses, K, ReconConfig{}, opt);
    CHECK(rep.final_cost < rep.initial_cost);
    CHECK((poses[0].t - gt_poses[0].t).norm() == 0.0);
    CHECK(err(poses) < 0.1 * before);
  }

  TEST_CASE("scale gauge keeps the farthest baseline") {
    const auto K = evtest::test_intrinsics();
    const auto gt_poses = ring(10, 12.0, 2.0, kPi / 2);
    std::vector<MapLine> lines;
    std::mt19937_64 rng(21);
    while (lines.size() < 10) {
      const Vec3 a = random_point(rng, 2.0), b = random_point(rng, 2.0);
      if ((a - b).norm() < 1.5) continue;
      auto m = observed_line(a, b, gt_poses, K, 10);
      if (m.observations.size() == gt_poses.size()) lines.push_back(std::move(m));
    }
    auto poses = gt_poses;
    for (std::size_t i = 1; i < poses.size(); ++i) poses[i].t += evtest::random_vec(rng, 0.3);
    std::size_t far = 1;
    for (std::size_t i = 2; i < poses.size(); ++i)
      if ((poses[i].t - poses[0].t).norm() > (poses[far].t - poses[0].t).norm()) far = i;
    const Vec3 b = (poses[far].t - poses[0].t).normalized();
    const double along = b.dot(poses[far].t - poses[0].t);
    OptimizeOptions opt;
    opt.refine_poses = true;
    opt.fix_scale = true;
    const auto rep = optimize(lines, poses, K, ReconConfig{}, opt);
    CHECK(rep.iterations > 0);
    CHECK(rep.final_cost < rep.initial_cost);
    CHECK(b.dot(poses[far].t - poses[0].t) == doctest::Approx(along).epsilon(1e-12));
  }

  TEST_CASE("line map export round trip") {
    evtest::TempDir dir("recon");
    std::vector<Line3D> lines;
    Line3D a = Line3D::through(Vec3(0, 0, 0), Vec3(1, 2, 3));
    a.endpoints = std::make_pair(Vec3(0, 0, 0), Vec3(1, 2, 3));
    Line3D b = Line3D::through(Vec3(-1, 0.5, 0.25), Vec3(1e-3, 7, -2));
    b.endpoints = std::make_pair(Vec3(-1, 0.5, 0.25), Vec3(1e-3, 7, -2));
    lines = {a, Line3D{}, b};
    save_lines_csv(dir.file("m.csv"), lines);
    const auto back = load_lines_csv(dir.file("m.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[1].endpoints->first == b.endpoints->first);
    CHECK(back[1].endpoints->second == b.endpoints->second);
    save_lines_ply(dir.file("m.ply"), lines);
    std::ifstream in(dir.file("m.ply"));
    std::string all((std::istreambuf_iterator<char>(in)), {});
    CHECK(all.find("element vertex 4") != std::string::npos);
    CHECK(all.find("element edge 2") != std::string::npos);
  }
}
