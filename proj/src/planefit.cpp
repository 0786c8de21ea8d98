#include "evline/planefit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "evline/io.hpp"

namespace evline {

double SpaceTimePlane::scaled_time(TimeUs t) const {
  return double(t - t_ref) / 1000.0 * time_scale;
}

double SpaceTimePlane::distance(const Vec3& p) const {
  return std::abs(coeffs.head<3>().dot(p) + coeffs[3]);
}

double SpaceTimePlane::distance(const Event& e) const {
  return distance(Vec3(e.x, e.y, scaled_time(e.t)));
}

std::vector<Event> candidate_events(const LineSegment2D& line, std::span<const Event> events,
                                    double radius) {
  std::vector<Event> out;
  const double lo_x = std::min(line.p1.x(), line.p2.x()) - radius;
  const double hi_x = std::max(line.p1.x(), line.p2.x()) + radius;
  const double lo_y = std::min(line.p1.y(), line.p2.y()) - radius;
  const double hi_y = std::max(line.p1.y(), line.p2.y()) + radius;
  for (const Event& e : events) {
    if (e.x < lo_x || e.x > hi_x || e.y < lo_y || e.y > hi_y) continue;
    if (point_segment_distance(Vec2(e.x, e.y), line) <= radius) out.push_back(e);
  }
  return out;
}

namespace {

void canonical_sign(Vec4& c) {
  for (int i = 0; i < 3; ++i) {
    if (c[i] > 0) return;
    if (c[i] < 0) {
      c = -c;
      return;
    }
  }
}

bool tls_plane(std::span<const Vec3> pts, std::span<const std::size_t> idx, Vec4& out) {
  Vec3 mean = Vec3::Zero();
  for (auto i : idx) mean += pts[i];
  mean /= double(idx.size());
  Mat3 cov = Mat3::Zero();
  for (auto i : idx) cov += (pts[i] - mean) * (pts[i] - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 n = es.eigenvectors().col(0);
  if (!n.allFinite()) return false;
  out << n, -n.dot(mean);
  return true;
}

std::vector<std::size_t> inliers_of(std::span<const Vec3> pts, const Vec4& c, double tau) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(c.head<3>().dot(pts[i]) + c[3]) < tau) in.push_back(i);
  return in;
}

}  // namespace

std::optional<SpaceTimePlane> fit_plane_ransac_points(std::span<const Vec3> pts, double tau,
                                                      int iterations, std::size_t min_support,
                                                      std::uint64_t seed) {
  const std::size_t n = pts.size();
  if (n < 3) return std::nullopt;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  Vec4 best = Vec4::Zero();
  std::size_t best_count = 0;
  for (int it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    const Vec3 nrm = (pts[j] - pts[i]).cross(pts[k] - pts[i]);
    const double len = nrm.norm();
    if (len < 1e-12) continue;
    Vec4 c;
    c << nrm / len, -nrm.dot(pts[i]) / len;
    std::size_t count = 0;
    for (const Vec3& p : pts) count += std::abs(c.head<3>().dot(p) + c[3]) < tau;
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  if (best_count < 3) return std::nullopt;

  auto in = inliers_of(pts, best, tau);
  for (int round = 0; round < 10; ++round) {
    Vec4 refit;
    if (!tls_plane(pts, in, refit)) break;
    auto in2 = inliers_of(pts, refit, tau);
    best = refit;
    if (in2.size() < 3) return std::nullopt;
    const bool same = in2 == in;
    in = std::move(in2);
    if (same) break;
  }
  if (in.size() < std::max<std::size_t>(min_support, 3)) return std::nullopt;
  canonical_sign(best);

  SpaceTimePlane plane;
  plane.coeffs = best;
  double ss = 0;
  for (auto i : in) {
    const double d = best.head<3>().dot(pts[i]) + best[3];
    ss += d * d;
  }
  plane.rms_residual = std::sqrt(ss / double(in.size()));
  plane.inliers = std::move(in);
  return plane;
}

std::optional<SpaceTimePlane> fit_plane_ransac(std::span<const Event> candidates, TimeUs t_ref,
                                               const PlaneFitConfig& cfg, std::uint64_t seed) {
  std::vector<Vec3> pts;
  pts.reserve(candidates.size());
  for (const Event& e : candidates)
    pts.emplace_back(e.x, e.y, double(e.t - t_ref) / 1000.0 * cfg.time_scale);
  auto plane = fit_plane_ransac_points(pts, cfg.tau, cfg.iterations, cfg.min_support, seed);
  if (plane) {
    plane->t_ref = t_ref;
    plane->time_scale = cfg.time_scale;
  }
  return plane;
}

LineSegment2D slice_plane(const SpaceTimePlane& plane, TimeUs t_obs, const LineSegment2D& original) {
  const double a = plane.coeffs[0], b = plane.coeffs[1];
  const double ab2 = a * a + b * b;
  if (ab2 < 1e-18) throw DegenerateError("space-time plane has no spatial extent");
  const double c = plane.coeffs[2] * plane.scaled_time(t_obs) + plane.coeffs[3];
  const Vec2 n(a, b);
  auto project = [&](const Vec2& p) -> Vec2 { return p - (n.dot(p) + c) / ab2 * n; };
  LineSegment2D out = original;
  out.p1 = project(original.p1);
  out.p2 = project(original.p2);
  out.t_obs = t_obs;
  return out;
}

Vec2 transport_to(const SpaceTimePlane& plane, const Event& e, TimeUs t_obs) {
  const double a = plane.coeffs[0], b = plane.coeffs[1];
  const double ab2 = a * a + b * b;
  if (ab2 < 1e-18) throw DegenerateError("space-time plane has no spatial extent");
  const double dt = plane.scaled_time(e.t) - plane.scaled_time(t_obs);
  return Vec2(e.x, e.y) + plane.coeffs[2] * dt / ab2 * Vec2(a, b);
}

std::optional<std::vector<Event>> associate(const SpaceTimePlane& plane,
                                            std::span<const Event> candidates, double tau,
                                            std::size_t n_assoc, TimeUs t_obs) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (plane.distance(candidates[i]) < tau) in.push_back(i);
  if (in.empty()) return std::nullopt;
  if (in.size() > n_assoc) {
    std::stable_sort(in.begin(), in.end(), [&](std::size_t i, std::size_t j) {
      return std::llabs(candidates[i].t - t_obs) < std::llabs(candidates[j].t - t_obs);
    });
    in.resize(n_assoc);
    std::sort(in.begin(), in.end());
  }
  std::vector<Event> out;
  out.reserve(in.size());
  for (auto i : in) out.push_back(candidates[i]);
  return out;
}

std::uint64_t line_seed(std::uint64_t base, int frame_id, std::size_t index) {
  std::seed_seq seq{std::uint32_t(base), std::uint32_t(base >> 32), std::uint32_t(frame_id),
                    std::uint32_t(index)};
  std::array<std::uint32_t, 2> v{};
  seq.generate(v.begin(), v.end());
  return (std::uint64_t(v[0]) << 32) | v[1];
}

std::vector<AssociatedLine> refine_lines(std::span<const LineSegment2D> lines,
                                         std::span<const Event> window, const PlaneFitConfig& cfg,
                                         std::uint64_t seed_base) {
  std::vector<AssociatedLine> out;
  for (std::size_t j = 0; j < lines.size(); ++j) {
    const LineSegment2D& l = lines[j];
    const auto cand = candidate_events(l, window, cfg.candidate_radius);
    auto plane = fit_plane_ransac(cand, l.t_obs, cfg, line_seed(seed_base, l.frame_id, j));
    if (!plane) continue;
    const double ab = plane->coeffs.head<2>().norm();
    if (ab < 1e-9) continue;
    auto ev = associate(*plane, cand, cfg.tau, cfg.n_assoc, l.t_obs);
    if (!ev) continue;
    AssociatedLine a;
    a.original = l;
    a.refined = slice_plane(*plane, l.t_obs, l);
    if (a.refined.length() < std::max(cfg.min_length, 1e-9)) continue;
    a.plane = std::move(*plane);
    a.assoc_events = std::move(*ev);
    out.push_back(std::move(a));
  }
  return out;
}

void save_planes_csv(const std::string& path, std::span<const AssociatedLine> lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "frame_id,a,b,c,d,inliers,rms\n";
  for (const auto& l : lines) {
    const Vec4& c = l.plane.coeffs;
    out << l.refined.frame_id << ',' << fmt_double(c[0]) << ',' << fmt_double(c[1]) << ','
        << fmt_double(c[2]) << ',' << fmt_double(c[3]) << ',' << l.plane.inliers.size() << ','
        << fmt_double(l.plane.rms_residual) << '\n';
  }
}

}  // namespace evline
