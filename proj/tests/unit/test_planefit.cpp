#include "evline/detect.hpp"
#include "evline/planefit.hpp"
#include "evline/synth.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <set>

using namespace evline;

namespace {

LineSegment2D seg(double x1, double y1, double x2, double y2, TimeUs t = 0) {
  LineSegment2D s;
  s.p1 = {x1, y1};
  s.p2 = {x2, y2};
  s.t_obs = t;
  return s;
}

double normal_angle_deg(const Vec3& a, const Vec3& b) {
  return rad2deg(std::acos(std::min(1.0, std::abs(a.normalized().dot(b.normalized())))));
}

// Points on the plane n·p + d = 0 spread over a 100 x 100 patch.
std::vector<Vec3> plane_points(std::mt19937_64& rng, const Vec3& n, double d, std::size_t count) {
  Vec3 u = n.unitOrthogonal();
  Vec3 v = n.cross(u).normalized();
  std::uniform_real_distribution<double> U(-50, 50);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < count; ++i) pts.push_back(-d * n + U(rng) * u + U(rng) * v);
  return pts;
}

}  // namespace

TEST_SUITE("planefit") {
  TEST_CASE("candidate radius boundary") {
    std::vector<Event> ev = {{50, 10, 0, 1}, {50, 30, 1, 1}, {120, 0, 2, 1}};
    const auto in = candidate_events(seg(0, 0.1, 100, 0.1), ev, 10.0);
    REQUIRE(in.size() == 1);
    CHECK(in[0].y == 10);
    CHECK(candidate_events(seg(0, -0.1, 100, -0.1), std::span<const Event>(ev).first(1), 10.0).empty());
    CHECK(candidate_events(seg(0, 0, 10, 0), std::vector<Event>{}, 10.0).empty());
  }

  TEST_CASE("candidates match brute force point-to-segment distance") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> X(0, 99);
    std::vector<Event> ev;
    for (int i = 0; i < 2000; ++i) ev.push_back({X(rng), X(rng), i, 1});
    const auto s = seg(20.3, 30.7, 70.2, 55.1);
    const auto in = candidate_events(s, ev, 7.5);
    std::size_t expect = 0;
    for (const auto& e : ev) {
      const Vec2 p(e.x, e.y), d = s.p2 - s.p1;
      const double u = std::clamp((p - s.p1).dot(d) / d.squaredNorm(), 0.0, 1.0);
      expect += (p - s.p1 - u * d).norm() <= 7.5;
    }
    CHECK(in.size() == expect);
  }

  TEST_CASE("exact planar points") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 n = evtest::random_unit(rng);
      const auto pts = plane_points(rng, n, 3.0, 200);
      const auto p = fit_plane_ransac_points(pts, 2.0, 200, 10, trial);
      REQUIRE(p.has_value());
      CHECK(normal_angle_deg(p->coeffs.head<3>(), n) < 0.5);
      CHECK(p->inliers.size() == pts.size());
      CHECK(p->rms_residual < 1e-9);
    }
  }

  TEST_CASE("contaminated planes") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 n = evtest::random_unit(rng);
      auto pts = plane_points(rng, n, -2.0, 700);
      std::normal_distribution<double> g(0.0, 0.2);
      for (auto& p : pts) p += g(rng) * n;
      std::uniform_real_distribution<double> U(-50, 50);
      const std::size_t n_clean = pts.size();
      for (int i = 0; i < 300; ++i) pts.emplace_back(U(rng), U(rng), U(rng));
      const auto p = fit_plane_ransac_points(pts, 2.0, 200, 10, 100 + trial);
      REQUIRE(p.has_value());
      CHECK(normal_angle_deg(p->coeffs.head<3>(), n) < 2.0);
      std::size_t noise_in = 0;
      for (auto i : p->inliers) noise_in += i >= n_clean;
      CHECK(double(noise_in) <= 0.1 * 300);
    }
  }

  TEST_CASE("under-determined input fails") {
    std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    CHECK_FALSE(fit_plane_ransac_points(two, 2.0, 200, 3, 1).has_value());
    std::vector<Event> ev = {{1, 1, 0, 1}, {2, 2, 10, 1}};
    CHECK_FALSE(fit_plane_ransac(ev, 0, {}, 1).has_value());
  }

  TEST_CASE("too little support fails") {
    std::mt19937_64 rng(2);
    const auto pts = plane_points(rng, Vec3::UnitX(), 0.0, 8);
    CHECK_FALSE(fit_plane_ransac_points(pts, 2.0, 200, 10, 1).has_value());
    CHECK(fit_plane_ransac_points(pts, 2.0, 200, 3, 1).has_value());
  }

  TEST_CASE("deterministic per seed, seed independent on clean input") {
    std::mt19937_64 rng(8);
    auto pts = plane_points(rng, Vec3(1, 2, 0.1).normalized(), 4.0, 150);
    std::uniform_real_distribution<double> U(-50, 50);
    for (int i = 0; i < 50; ++i) pts.emplace_back(U(rng), U(rng), U(rng));
    const auto a = fit_plane_ransac_points(pts, 2.0, 200, 10, 42);
    const auto b = fit_plane_ransac_points(pts, 2.0, 200, 10, 42);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->coeffs == b->coeffs);
    CHECK(a->inliers == b->inliers);

    const auto clean = plane_points(rng, Vec3(-1, 0.5, 0.3).normalized(), 1.0, 100);
    const auto c0 = fit_plane_ransac_points(clean, 2.0, 200, 10, 1);
    for (std::uint64_t s = 2; s < 10; ++s) {
      const auto c = fit_plane_ransac_points(clean, 2.0, 200, 10, s);
      REQUIRE(c.has_value());
      const double sign = c->coeffs.head<3>().dot(c0->coeffs.head<3>()) > 0 ? 1.0 : -1.0;
      CHECK((c->coeffs - sign * c0->coeffs).norm() < 1e-9);
    }
  }

  TEST_CASE("static edge slices to itself") {
    SpaceTimePlane p;
    p.coeffs = Vec4(1, 0, 0, -30);
    p.t_ref = 1000;
    for (TimeUs t : {0, 1000, 50000}) {
      const auto s = slice_plane(p, t, seg(29, 5, 31.5, 40));
      CHECK(s.p1.x() == doctest::Approx(30));
      CHECK(s.p2.x() == doctest::Approx(30));
      CHECK(s.p1.y() == doctest::Approx(5));
      CHECK(s.p2.y() == doctest::Approx(40));
      CHECK(s.t_obs == t);
    }
  }

  TEST_CASE("translating edge sliced at the observation time") {
    // Edge x = 30 + v t_ms, sampled at integer pixels.
    const double v = 0.37;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> Y(10, 60);
    std::uniform_int_distribution<TimeUs> T(-20000, 20000);
    std::vector<Event> ev;
    for (int i = 0; i < 3000; ++i) {
      const TimeUs t = T(rng);
      ev.push_back({int(std::lround(30 + v * t / 1000.0)), Y(rng), t, 1});
    }
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    PlaneFitConfig cfg;
    const TimeUs t_obs = 5000;
    const auto p = fit_plane_ransac(ev, t_obs, cfg, 9);
    REQUIRE(p.has_value());
    const auto s = slice_plane(*p, t_obs, seg(31, 10, 31, 60));
    const double x_true = 30 + v * 5.0;
    CHECK(std::abs(s.p1.x() - x_true) < 0.1);
    CHECK(std::abs(s.p2.x() - x_true) < 0.1);
  }

  TEST_CASE("slice of a plane without spatial extent throws") {
    SpaceTimePlane p;
    p.coeffs = Vec4(0, 0, 1, 0);
    CHECK_THROWS_AS(slice_plane(p, 0, seg(0, 0, 10, 0)), DegenerateError);
  }

  TEST_CASE("association keeps the temporally nearest inliers") {
    SpaceTimePlane p;
    p.coeffs = Vec4(1, 0, 0, -30);
    std::vector<Event> ev;
    for (int i = 0; i < 150; ++i) ev.push_back({30, i % 50, TimeUs(i * 100), 1});
    for (int i = 0; i < 20; ++i) ev.push_back({40, i, TimeUs(i * 100), 1});
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    const TimeUs t_obs = 7000;
    const auto a = associate(p, ev, 2.0, 100, t_obs);
    REQUIRE(a.has_value());
    REQUIRE(a->size() == 100);
    TimeUs worst = 0;
    for (const auto& e : *a) {
      CHECK(e.x == 30);
      worst = std::max<TimeUs>(worst, std::llabs(e.t - t_obs));
    }
    std::size_t closer = 0;
    for (int i = 0; i < 150; ++i) closer += std::llabs(i * 100 - t_obs) < worst;
    CHECK(closer <= 100);
    CHECK(std::is_sorted(a->begin(), a->end(), [](const Event& x, const Event& y) { return x.t < y.t; }));

    const auto b = associate(p, std::span<const Event>(ev).first(40), 2.0, 100, t_obs);
    REQUIRE(b.has_value());
    std::size_t on_plane = 0;
    for (int i = 0; i < 40; ++i) on_plane += ev[i].x == 30;
    CHECK(b->size() == on_plane);
  }

  TEST_CASE("inlier test is strict") {
    SpaceTimePlane p;
    p.coeffs = Vec4(1, 0, 0, -30);
    std::vector<Event> ev = {{32, 0, 0, 1}, {31, 0, 0, 1}};
    const auto a = associate(p, ev, 2.0, 100, 0);
    REQUIRE(a.has_value());
    REQUIRE(a->size() == 1);
    CHECK((*a)[0].x == 31);
    std::vector<Event> far = {{35, 0, 0, 1}};
    CHECK_FALSE(associate(p, far, 2.0, 100, 0).has_value());
  }

  TEST_CASE("refinement on the synthetic room") {
    const auto scene = scene_preset("room");
    const auto K = preset_intrinsics("room");
    const auto traj = orbit_trajectory(preset_orbit("room"));
    const auto sim = generate_events(scene, traj, K, {});
    const TimeUs interval = 50000;
    const std::vector<double> fr = {1.0, 0.2};
    const auto wins = window_counts(sim.stream, interval, fr);
    const std::vector<Representation> reps = {Representation::kBinary, Representation::kTimestamp};
    PlaneFitConfig cfg;
    std::size_t lines = 0, not_worse = 0;
    double f_raw = 0, f_ref = 0;
    int frames = 0;
    for (int k = 2; k < 79; k += 3) {
      const TimeUs tc = sim.stream.events.front().t + k * interval + interval / 2;
      const auto frame = build_frame(sim.stream, k, tc, wins, reps);
      const auto gt = project_scene(scene, traj.at(tc), K, 15.0);
      const auto raw = mwmr_detect(frame);
      const auto window = slice_window(sim.stream, tc, wins[0]);
      const auto refined = refine_lines(raw, window, cfg);
      std::vector<LineSegment2D> ref;
      for (const auto& a : refined) {
        ref.push_back(a.refined);
        CHECK(a.assoc_events.size() <= cfg.n_assoc);
        for (const auto& e : a.assoc_events) CHECK(a.plane.distance(e) < cfg.tau);
        double s_orig = 0, s_ref = 0;
        const auto cand = candidate_events(a.original, window, cfg.candidate_radius);
        for (auto i : a.plane.inliers) {
          const Vec2 q = transport_to(a.plane, cand[i], tc);
          s_orig += std::pow(point_line_distance(q, a.original), 2);
          s_ref += std::pow(point_line_distance(q, a.refined), 2);
        }
        not_worse += s_ref <= s_orig + 1e-9;
        ++lines;
      }
      // Localization is what refinement changes, so score at 1 px.
      f_raw += score_detections(raw, gt, 1.0).f_score;
      f_ref += score_detections(ref, gt, 1.0).f_score;
      ++frames;
    }
    REQUIRE(lines > 50);
    CHECK(double(not_worse) >= 0.95 * double(lines));
    CHECK(f_ref > f_raw);
  }

  TEST_CASE("line seeds differ across lines and frames") {
    std::set<std::uint64_t> seen;
    for (int f = 0; f < 20; ++f)
      for (std::size_t j = 0; j < 20; ++j) seen.insert(line_seed(7, f, j));
    CHECK(seen.size() == 400);
    CHECK(line_seed(7, 3, 4) == line_seed(7, 3, 4));
  }
}
