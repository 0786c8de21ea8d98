#include "evline/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "evline/io.hpp"

namespace evline {

Vec3 WireScene::bbox_min() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& s : segments) lo = lo.cwiseMin(s.a).cwiseMin(s.b);
  return lo;
}

Vec3 WireScene::bbox_max() const {
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& s : segments) hi = hi.cwiseMax(s.a).cwiseMax(s.b);
  return hi;
}

double WireScene::diameter() const {
  if (segments.empty()) return 0.0;
  return (bbox_max() - bbox_min()).norm();
}

namespace {

void add_box(std::vector<Segment3D>& out, const Vec3& lo, const Vec3& hi) {
  const auto corner = [&](int i) {
    return Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  };
  for (int i = 0; i < 8; ++i)
    for (int bit : {1, 2, 4})
      if (!(i & bit)) out.push_back({corner(i), corner(i | bit)});
}

void add_rect(std::vector<Segment3D>& out, const Vec3& o, const Vec3& u, const Vec3& v) {
  out.push_back({o, o + u});
  out.push_back({o + u, o + u + v});
  out.push_back({o + u + v, o + v});
  out.push_back({o + v, o});
}

}  // namespace

WireScene cube_scene(double side, bool grid) {
  WireScene s;
  s.name = grid ? "cube-grid" : "cube";
  const double h = side / 2;
  add_box(s.segments, Vec3::Constant(-h), Vec3::Constant(h));
  if (grid) {
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      for (double sgn : {-h, h}) {
        Vec3 a = Vec3::Zero(), b = Vec3::Zero();
        a[axis] = b[axis] = sgn;
        a[u] = -h;
        b[u] = h;
        s.segments.push_back({a, b});
        a[u] = b[u] = 0;
        a[v] = -h;
        b[v] = h;
        s.segments.push_back({a, b});
      }
    }
  }
  return s;
}

WireScene room_scene() {
  WireScene s;
  s.name = "room";
  auto& g = s.segments;
  add_box(g, {-4, -3, 0}, {4, 3, 3});
  // Table: top rectangle and four legs.
  const double tz = 0.75;
  add_rect(g, {-0.6, -0.4, tz}, {1.2, 0, 0}, {0, 0.8, 0});
  for (double x : {-0.6, 0.6})
    for (double y : {-0.4, 0.4}) g.push_back({{x, y, 0}, {x, y, tz}});
  // Door frame on the y = +3 wall.
  g.push_back({{1.0, 3, 0}, {1.0, 3, 2.1}});
  g.push_back({{1.0, 3, 2.1}, {2.0, 3, 2.1}});
  g.push_back({{2.0, 3, 2.1}, {2.0, 3, 0}});
  // Window on the x = -4 wall, picture frame on the x = +4 wall.
  add_rect(g, {-4, -1, 1}, {0, 2, 0}, {0, 0, 1});
  add_rect(g, {4, -0.8, 1.2}, {0, 1.6, 0}, {0, 0, 0.8});
  // Shelf boards on the y = -3 wall.
  g.push_back({{0.5, -3, 0.8}, {2.5, -3, 0.8}});
  g.push_back({{0.5, -3, 1.8}, {2.5, -3, 1.8}});
  return s;
}

WireScene scene_preset(const std::string& name) {
  if (name == "cube") return cube_scene(10.0, false);
  if (name == "cube-grid") return cube_scene(10.0, true);
  if (name == "room") return room_scene();
  throw std::invalid_argument("unknown scene preset `" + name + "` (cube, cube-grid, room)");
}

CameraPose look_at_pose(const Vec3& center, const Vec3& target, TimeUs stamp) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  CameraPose p;
  p.R.col(0) = x;
  p.R.col(1) = z.cross(x);
  p.R.col(2) = z;
  p.t = center;
  p.stamp = stamp;
  return p;
}

Trajectory orbit_trajectory(const OrbitSpec& o) {
  if (o.duration_us <= 0 || o.key_dt_us <= 0)
    throw std::invalid_argument("orbit: duration and key spacing must be positive");
  Trajectory tr;
  for (TimeUs t = 0;; t = std::min(t + o.key_dt_us, o.duration_us)) {
    const double s = double(t) / double(o.duration_us);
    const double az = deg2rad(o.start_deg + o.arc_deg * s);
    const Vec3 c = o.target + Vec3(o.radius * std::cos(az), o.radius * std::sin(az),
                                   o.height + o.bob * std::sin(kPi * o.bob_halfwaves * s));
    tr.keyposes.push_back(look_at_pose(c, o.look_at, t));
    if (t == o.duration_us) break;
  }
  return tr;
}

Intrinsics preset_intrinsics(const std::string& name) {
  Intrinsics K;
  if (name == "room") {
    K.fx = K.fy = 190.0;
    K.width = 346;
    K.height = 260;
  } else {
    K.fx = K.fy = 250.0;
    K.width = 320;
    K.height = 240;
  }
  K.cx = (K.width - 1) / 2.0;
  K.cy = (K.height - 1) / 2.0;
  return K;
}

OrbitSpec preset_orbit(const std::string& name) {
  OrbitSpec o;
  if (name == "room") {
    o.target = Vec3(0, 0, 0);
    o.look_at = Vec3(0, 0, 1.0);
    o.radius = 1.8;
    o.height = 1.4;
    o.start_deg = -90.0;
    o.arc_deg = 360.0;
    o.bob = 0.5;
    o.bob_halfwaves = 8.0;
    o.duration_us = 8'000'000;
  } else {
    // Horizontal radius 24 at height 7 puts the camera 25 units from the centre.
    o.radius = 24.0;
    o.height = 7.0;
    o.start_deg = 20.0;
    o.arc_deg = 90.0;
    o.bob = 3.0;
    o.bob_halfwaves = 6.0;
    o.duration_us = 2'000'000;
  }
  return o;
}

// ---------------------------------------------------------------------------
// Event simulation
// ---------------------------------------------------------------------------

namespace {

struct Projected {
  bool ok = false;
  Vec2 a, b;
};

Projected project_segment(const Segment3D& s, const CameraPose& pose, const Intrinsics& K,
                          double near) {
  Vec3 a = pose.to_camera(s.a), b = pose.to_camera(s.b);
  if (a.z() < near && b.z() < near) return {};
  if (a.z() < near) a = b + (a - b) * ((b.z() - near) / (b.z() - a.z()));
  if (b.z() < near) b = a + (b - a) * ((a.z() - near) / (a.z() - b.z()));
  Projected p;
  p.a = K.project(a);
  p.b = K.project(b);
  // Keep the rasterizer bounded when an endpoint projects far outside.
  const double lim = 4.0 * (K.width + K.height);
  if (!p.a.allFinite() || !p.b.allFinite() || p.a.cwiseAbs().maxCoeff() > lim ||
      p.b.cwiseAbs().maxCoeff() > lim)
    return {};
  p.ok = true;
  return p;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Convex hull (counter-clockwise) of up to four points.
std::vector<Vec2> hull4(std::array<Vec2, 4> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> h(8);
  int k = 0;
  for (int i = 0; i < 4; ++i) {
    while (k >= 2 && cross2(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (int i = 2, t = k + 1; i >= 0; --i) {
    while (k >= t && cross2(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(std::max(0, k - 1));
  return h;
}

bool inside_convex(const std::vector<Vec2>& h, const Vec2& p) {
  if (h.size() < 3) return false;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (cross2(h[(i + 1) % h.size()] - h[i], p - h[i]) < 0) return false;
  return true;
}

// x-extent of the polygon clipped to the horizontal slab [y0, y1].
bool slab_extent(const std::vector<Vec2>& poly, double y0, double y1, double& xl, double& xr) {
  xl = std::numeric_limits<double>::infinity();
  xr = -xl;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    if (p.y() >= y0 && p.y() <= y1) {
      xl = std::min(xl, p.x());
      xr = std::max(xr, p.x());
    }
    if (n < 2) continue;
    const Vec2& q = poly[(i + 1) % n];
    for (double yc : {y0, y1}) {
      if ((p.y() - yc) * (q.y() - yc) < 0) {
        const double x = p.x() + (q.x() - p.x()) * (yc - p.y()) / (q.y() - p.y());
        xl = std::min(xl, x);
        xr = std::max(xr, x);
      }
    }
  }
  return xl <= xr;
}

}  // namespace

SimResult generate_events(const WireScene& scene, const Trajectory& traj, const Intrinsics& K,
                          const SimOptions& opt) {
  if (opt.dt_us <= 0) throw std::invalid_argument("generate_events: dt must be positive");
  if (opt.noise_frac < 0 || opt.noise_frac >= 1)
    throw std::invalid_argument("generate_events: noise_frac must lie in [0, 1)");
  SimResult res;
  res.stream.width = K.width;
  res.stream.height = K.height;
  auto& out = res.stream.events;
  if (traj.keyposes.empty()) return res;

  const int W = K.width, H = K.height;
  std::vector<std::int64_t> last_fire(std::size_t(W) * H, -2);
  std::vector<Projected> prev(scene.segments.size());
  const TimeUs t0 = traj.begin();
  const std::int64_t steps = (traj.end() - t0) / opt.dt_us;

  for (std::int64_t k = 0; k <= steps; ++k) {
    const TimeUs t = t0 + k * opt.dt_us;
    const CameraPose pose = traj.at(t);
    for (std::size_t si = 0; si < scene.segments.size(); ++si) {
      const Projected cur = project_segment(scene.segments[si], pose, K, opt.near);
      const Projected old = prev[si];
      prev[si] = cur;
      if (k == 0 || !cur.ok || !old.ok) continue;

      if ((cur.a - old.a).norm() < 1e-6 && (cur.b - old.b).norm() < 1e-6) continue;
      const Vec2 dir1 = cur.b - cur.a;
      if (dir1.norm() < 1e-9) continue;
      const Vec2 n1 = Vec2(-dir1.y(), dir1.x()).normalized();
      const Vec2 d_old = old.b - old.a;
      const Vec2 n0 = d_old.norm() > 1e-9 ? Vec2(-d_old.y(), d_old.x()).normalized() : n1;
      const Vec2 motion = 0.5 * (cur.a + cur.b) - 0.5 * (old.a + old.b);
      const std::int8_t pol = motion.dot(n1) >= 0 ? 1 : -1;

      const auto hull = hull4({old.a, old.b, cur.a, cur.b});
      const double ymin = std::min({old.a.y(), old.b.y(), cur.a.y(), cur.b.y()}) - 0.6;
      const double ymax = std::max({old.a.y(), old.b.y(), cur.a.y(), cur.b.y()}) + 0.6;
      const int y_lo = std::max(0, int(std::ceil(ymin)));
      const int y_hi = std::min(H - 1, int(std::floor(ymax)));
      std::vector<Vec2> poly = hull;
      if (poly.size() < 3) poly = {old.a, old.b, cur.a, cur.b};
      for (int y = y_lo; y <= y_hi; ++y) {
        double xl, xr;
        if (!slab_extent(poly, y - 0.6, y + 0.6, xl, xr)) continue;
        const int x_lo = std::max(0, int(std::ceil(xl - 0.6)));
        const int x_hi = std::min(W - 1, int(std::floor(xr + 0.6)));
        for (int x = x_lo; x <= x_hi; ++x) {
          const Vec2 p(x, y);
          if (!inside_convex(hull, p)) continue;
          auto& lf = last_fire[std::size_t(y) * W + x];
          if (lf >= k - 1) continue;
          lf = k;
          const double s0 = std::abs(n0.dot(p - old.a)), s1 = std::abs(n1.dot(p - cur.a));
          const double f = s0 + s1 > 0 ? s0 / (s0 + s1) : 1.0;
          const TimeUs te = t - opt.dt_us + TimeUs(std::llround(std::clamp(f, 0.0, 1.0) * opt.dt_us));
          out.push_back({x, y, te, pol});
        }
      }
    }
  }
  res.clean_count = out.size();

  const auto n_noise = static_cast<std::size_t>(std::floor(opt.noise_frac * double(res.clean_count)));
  if (n_noise > 0) {
    TimeUs lo = out.front().t, hi = out.front().t;
    for (const auto& e : out) {
      lo = std::min(lo, e.t);
      hi = std::max(hi, e.t);
    }
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> ux(0, W - 1), uy(0, H - 1), up(0, 1);
    std::uniform_int_distribution<TimeUs> ut(lo, hi);
    for (std::size_t i = 0; i < n_noise; ++i) {
      const int x = ux(rng), y = uy(rng);
      const TimeUs te = ut(rng);
      out.push_back({x, y, te, std::int8_t(up(rng) ? 1 : -1)});
    }
  }
  res.noise_count = n_noise;
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return res;
}

std::vector<Vec3> ground_truth_edge_points(const WireScene& scene, double spacing) {
  if (!(spacing > 0)) throw std::invalid_argument("ground_truth_edge_points: spacing must be > 0");
  std::vector<Vec3> pts;
  std::map<std::tuple<long long, long long, long long>, bool> seen;
  const double q = 1e-9 * std::max(1.0, scene.diameter());
  for (const auto& s : scene.segments) {
    const double len = s.length();
    const long n = std::max(1L, long(std::ceil(len / spacing - 1e-9)));
    for (long i = 0; i <= n; ++i) {
      const Vec3 p = s.a + (s.b - s.a) * (double(i) / double(n));
      const auto key = std::make_tuple(std::llround(p.x() / q), std::llround(p.y() / q),
                                       std::llround(p.z() / q));
      if (seen.emplace(key, true).second) pts.push_back(p);
    }
  }
  return pts;
}

std::vector<CameraPose> perturb_poses(std::span<const CameraPose> poses, double rot_std_deg,
                                      double trans_std, std::uint64_t seed, bool keep_first) {
  if (rot_std_deg < 0 || trans_std < 0)
    throw std::invalid_argument("perturb_poses: standard deviations must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<CameraPose> out(poses.begin(), poses.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double yaw = g(rng) * deg2rad(rot_std_deg);
    const double pitch = g(rng) * deg2rad(rot_std_deg);
    const double roll = g(rng) * deg2rad(rot_std_deg);
    const Vec3 dt(g(rng) * trans_std, g(rng) * trans_std, g(rng) * trans_std);
    if (keep_first && i == 0) continue;
    out[i].R = out[i].R * euler_zyx(yaw, pitch, roll);
    out[i].t += dt;
  }
  return out;
}

std::vector<LineSegment2D> project_scene(const WireScene& scene, const CameraPose& pose,
                                         const Intrinsics& K, double min_length,
                                         std::vector<std::size_t>* line_index, double near) {
  std::vector<LineSegment2D> out;
  if (line_index) line_index->clear();
  const double lo_x = -0.5, hi_x = K.width - 0.5, lo_y = -0.5, hi_y = K.height - 0.5;
  for (std::size_t i = 0; i < scene.segments.size(); ++i) {
    Vec3 a = pose.to_camera(scene.segments[i].a), b = pose.to_camera(scene.segments[i].b);
    if (a.z() < near && b.z() < near) continue;
    if (a.z() < near) a = b + (a - b) * ((b.z() - near) / (b.z() - a.z()));
    if (b.z() < near) b = a + (b - a) * ((a.z() - near) / (a.z() - b.z()));
    const Vec2 p = K.project(a), q = K.project(b);
    // Liang-Barsky against the image rectangle.
    double t0 = 0, t1 = 1;
    const Vec2 d = q - p;
    const double pv[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double qv[4] = {p.x() - lo_x, hi_x - p.x(), p.y() - lo_y, hi_y - p.y()};
    bool inside = true;
    for (int k = 0; k < 4 && inside; ++k) {
      if (std::abs(pv[k]) < 1e-15) {
        inside = qv[k] >= 0;
        continue;
      }
      const double r = qv[k] / pv[k];
      if (pv[k] < 0)
        t0 = std::max(t0, r);
      else
        t1 = std::min(t1, r);
      inside = t0 <= t1;
    }
    if (!inside) continue;
    LineSegment2D s;
    s.p1 = p + t0 * d;
    s.p2 = p + t1 * d;
    s.t_obs = pose.stamp;
    if (s.length() < std::max(min_length, 1e-9)) continue;
    out.push_back(s);
    if (line_index) line_index->push_back(i);
  }
  return out;
}

std::vector<CameraPose> sample_poses(const Trajectory& traj, TimeUs dt_us) {
  if (dt_us <= 0) throw std::invalid_argument("sample_poses: dt must be positive");
  std::vector<CameraPose> out;
  if (traj.keyposes.empty()) return out;
  for (TimeUs t = traj.begin(); t <= traj.end(); t += dt_us) out.push_back(traj.at(t));
  if (out.back().stamp != traj.end()) out.push_back(traj.at(traj.end()));
  return out;
}

void save_segments_csv(const std::string& path, std::span<const Segment3D> segments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "line_id,x1,y1,z1,x2,y2,z2\n";
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    out << i << ',' << fmt_double(s.a.x()) << ',' << fmt_double(s.a.y()) << ','
        << fmt_double(s.a.z()) << ',' << fmt_double(s.b.x()) << ',' << fmt_double(s.b.y()) << ','
        << fmt_double(s.b.z()) << '\n';
  }
}

std::vector<Segment3D> load_segments_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<Segment3D> segs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line) || line.rfind("line_id", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw ParseError("expected 7 comma-separated fields", lineno);
    Segment3D s;
    try {
      s.a = {parse_double(f[1]), parse_double(f[2]), parse_double(f[3])};
      s.b = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6])};
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    segs.push_back(s);
  }
  return segs;
}

}  // namespace evline
