#include "evline/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "evline/io.hpp"

namespace evline {

Line3D triangulate_pair(const LineSegment2D& lp, const CameraPose& pose_p, const LineSegment2D& lq,
                        const CameraPose& pose_q, const Intrinsics& K, double min_angle_deg) {
  return intersect_planes(backproject_line(lp, pose_p, K), backproject_line(lq, pose_q, K),
                          deg2rad(min_angle_deg));
}

double view_cost(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                 const Intrinsics& K) {
  return tri_residual(line, backproject_line(seg, pose, K), pose.center()).cost();
}

namespace {

// Point of the ray c + s r (s >= 0) closest to the line, or nothing when
// the ray is parallel to it.
std::optional<Vec3> ray_line_closest(const Vec3& c, const Vec3& r, const Line3D& L) {
  const Vec3 a = L.anchor();
  const Vec3 w = c - a;
  const double b = r.dot(L.d);
  const double denom = r.squaredNorm() - b * b;
  if (denom < 1e-12 * r.squaredNorm()) return std::nullopt;
  const double s = (b * L.d.dot(w) - r.dot(w)) / denom;
  return c + std::max(s, 0.0) * r;
}

}  // namespace

AuxDistances aux_distances(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                           const Intrinsics& K) {
  AuxDistances out;
  const Vec3 h = project_line(line, pose, K);
  const Vec2 dir_proj(-h.y(), h.x());
  const double c2 = std::min(1.0, std::abs(dir_proj.dot(seg.direction())));
  out.angle_2d_deg = rad2deg(std::acos(c2));
  out.perp_px = std::max(std::abs(h.dot(Vec3(seg.p1.x(), seg.p1.y(), 1.0))),
                         std::abs(h.dot(Vec3(seg.p2.x(), seg.p2.y(), 1.0))));

  const double f = 0.5 * (K.fx + K.fy);
  std::optional<Vec3> x[2];
  const Vec2 ends[2] = {seg.p1, seg.p2};
  for (int k = 0; k < 2; ++k) {
    const Vec3 ray = pose.R * K.unproject(ends[k]);
    x[k] = ray_line_closest(pose.center(), ray, line);
    if (!x[k]) {
      out.angle_3d_deg = 90.0;
      out.persp_px = std::numeric_limits<double>::infinity();
      return out;
    }
    const double depth = std::max(pose.to_camera(*x[k]).z(), 1e-9);
    out.persp_px = std::max(out.persp_px, line.distance(*x[k]) / depth * f);
  }
  const Vec3 seg3 = *x[1] - *x[0];
  if (seg3.norm() < 1e-12) {
    out.angle_3d_deg = 90.0;
  } else {
    out.angle_3d_deg = rad2deg(std::acos(std::min(1.0, std::abs(seg3.normalized().dot(line.d)))));
  }
  return out;
}

bool is_inlier_view(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                    const Intrinsics& K, const ReconConfig& cfg) {
  AuxDistances a;
  try {
    if (view_cost(line, seg, pose, K) > cfg.graff_thresh) return false;
    a = aux_distances(line, seg, pose, K);
  } catch (const DegenerateError&) {
    return false;
  }
  return a.angle_3d_deg <= cfg.max_angle_3d_deg && a.angle_2d_deg <= cfg.max_angle_2d_deg &&
         a.perp_px <= cfg.max_perp_px && a.persp_px <= cfg.max_persp_px;
}

std::optional<LineHypothesis> ransac_triangulate(std::span<const LineObservation> views,
                                                 std::span<const CameraPose> poses,
                                                 const Intrinsics& K, const ReconConfig& cfg,
                                                 std::uint64_t seed) {
  const std::size_t n = views.size();
  if (n < 2) return std::nullopt;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n <= cfg.exhaustive_max_views) {
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) pairs.emplace_back(p, q);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (pairs.size() < std::size_t(std::max(cfg.random_pairs, 0))) {
      std::size_t p = pick(rng), q = pick(rng);
      if (p == q) continue;
      if (p > q) std::swap(p, q);
      pairs.emplace_back(p, q);
    }
  }

  std::optional<LineHypothesis> best;
  for (auto [p, q] : pairs) {
    LineHypothesis h;
    try {
      h.line = triangulate_pair(views[p].segment, poses[views[p].pose_index], views[q].segment,
                                poses[views[q].pose_index], K, cfg.min_plane_angle_deg);
    } catch (const DegenerateError&) {
      continue;
    }
    h.p = p;
    h.q = q;
    for (std::size_t k = 0; k < n; ++k) {
      const CameraPose& pose = poses[views[k].pose_index];
      if (!is_inlier_view(h.line, views[k].segment, pose, K, cfg)) continue;
      h.inliers.push_back(k);
      h.score += view_cost(h.line, views[k].segment, pose, K);
    }
    if (!best || h.inliers.size() > best->inliers.size() ||
        (h.inliers.size() == best->inliers.size() && h.score < best->score))
      best = std::move(h);
  }
  if (!best || best->inliers.size() < std::max<std::size_t>(cfg.min_inliers, 2)) return std::nullopt;

  std::vector<LineObservation> in;
  for (auto k : best->inliers) in.push_back(views[k]);
  best->line = refine_triangulation(best->line, in, poses, K);
  best->score = 0.0;
  for (const auto& v : in) best->score += view_cost(best->line, v.segment, poses[v.pose_index], K);
  return best;
}

std::optional<Line3D> trim_endpoints(const Line3D& line, std::span<const LineObservation> views,
                                     std::span<const CameraPose> poses, const Intrinsics& K,
                                     double bandwidth) {
  const Vec3 a = line.anchor();
  std::vector<double> cand;
  // Intersection of the visible extents, in line coordinates.
  double lo_all = -std::numeric_limits<double>::infinity();
  double hi_all = std::numeric_limits<double>::infinity();
  for (const auto& v : views) {
    const CameraPose& pose = poses[v.pose_index];
    const LineSegment2D& s = v.segment;
    if (s.length() <= 0) continue;
    const Vec2 nrm = s.normal();
    double got[2];
    int n_got = 0;
    for (const Vec2& e : {s.p1, s.p2}) {
      const Vec3 n_cam = K.unproject(e).cross(K.unproject(e + nrm));
      if (n_cam.norm() < 1e-15) continue;
      const Plane3D pl = Plane3D::through(pose.center(), (pose.R * n_cam).normalized());
      const double nd = pl.n.dot(line.d);
      if (std::abs(nd) < 1e-9) continue;
      got[n_got++] = -(pl.n.dot(a) + pl.dist) / nd;
    }
    for (int k = 0; k < n_got; ++k) cand.push_back(got[k]);
    if (n_got == 2) {
      lo_all = std::max(lo_all, std::min(got[0], got[1]));
      hi_all = std::min(hi_all, std::max(got[0], got[1]));
    }
  }
  if (cand.empty()) return std::nullopt;
  std::sort(cand.begin(), cand.end());

  const double h = bandwidth * (cand.back() - cand.front());
  struct Cluster {
    std::size_t begin, end;
    double median;
  };
  std::vector<Cluster> clusters;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= cand.size(); ++i) {
    if (i == cand.size() || cand[i] - cand[i - 1] > h) {
      const std::size_t m = start + (i - start) / 2;
      const double med = (i - start) % 2 ? cand[m] : 0.5 * (cand[m - 1] + cand[m]);
      clusters.push_back({start, i, med});
      start = i;
    }
  }

  double lo, hi;
  if (clusters.size() == 1) {
    lo = cand.front();
    hi = cand.back();
  } else {
    // The two most populated clusters; ties go to the wider pair.
    std::vector<std::size_t> order(clusters.size());
    std::iota(order.begin(), order.end(), 0);
    auto size = [&](std::size_t c) { return clusters[c].end - clusters[c].begin; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (size(x) != size(y)) return size(x) > size(y);
      return std::abs(clusters[x].median - 0.5 * (cand.front() + cand.back())) >
             std::abs(clusters[y].median - 0.5 * (cand.front() + cand.back()));
    });
    lo = std::min(clusters[order[0]].median, clusters[order[1]].median);
    hi = std::max(clusters[order[0]].median, clusters[order[1]].median);
  }
  if (lo_all < hi_all) {
    lo = std::min(lo, lo_all);
    hi = std::max(hi, hi_all);
  }
  Line3D out = line;
  out.endpoints = std::make_pair(a + lo * line.d, a + hi * line.d);
  return out;
}

std::vector<MapLine> dedup_lines(std::vector<MapLine> lines, const Vec3& centroid,
                                 double diameter, const ReconConfig& cfg) {
  const std::size_t n = lines.size();
  if (n == 0) return lines;
  const double diam = diameter > 0 ? diameter : 1.0;
  std::vector<Vec3> center(n);
  std::vector<double> disparity(n), length(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& L = lines[i].line;
    if (!L.endpoints) throw std::invalid_argument("dedup_lines: line without endpoints");
    center[i] = 0.5 * (L.endpoints->first + L.endpoints->second);
    length[i] = (L.endpoints->second - L.endpoints->first).norm();
    disparity[i] = 1.0 / std::max((center[i] - centroid).norm(), 1e-9);
  }
  auto dist = [&](std::size_t i, std::size_t j) {
    const double c = std::min(1.0, std::abs(lines[i].line.d.dot(lines[j].line.d)));
    const double ang = std::acos(c);
    const double dc = (center[i] - center[j]).norm() / diam;
    const double dd = disparity[i] - disparity[j];
    return std::sqrt(ang * ang + dc * dc + dd * dd);
  };

  // DBSCAN: -1 unvisited, otherwise cluster id; noise points form singletons.
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0) continue;
    std::vector<std::size_t> nb;
    for (std::size_t j = 0; j < n; ++j)
      if (dist(i, j) <= cfg.dbscan_eps) nb.push_back(j);
    const int id = next++;
    label[i] = id;
    if (nb.size() < cfg.dbscan_min_pts) continue;
    std::vector<std::size_t> queue = nb;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const std::size_t j = queue[qi];
      if (label[j] >= 0 && j != i) continue;
      label[j] = id;
      std::vector<std::size_t> nb2;
      for (std::size_t k = 0; k < n; ++k)
        if (dist(j, k) <= cfg.dbscan_eps) nb2.push_back(k);
      if (nb2.size() >= cfg.dbscan_min_pts)
        for (auto k : nb2)
          if (label[k] < 0) queue.push_back(k);
    }
  }

  std::vector<std::size_t> keep(next, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& k = keep[label[i]];
    if (k == n || length[i] > length[k]) k = i;
  }
  std::vector<bool> survive(n, false);
  for (auto k : keep) survive[k] = true;
  std::vector<MapLine> out;
  for (std::size_t i = 0; i < n; ++i)
    if (survive[i]) out.push_back(std::move(lines[i]));
  return out;
}

void save_lines_csv(const std::string& path, std::span<const Line3D> lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "line_id,x1,y1,z1,x2,y2,z2\n";
  int id = 0;
  for (const auto& l : lines) {
    if (!l.endpoints) continue;
    const auto& [a, b] = *l.endpoints;
    out << id++ << ',' << fmt_double(a.x()) << ',' << fmt_double(a.y()) << ',' << fmt_double(a.z())
        << ',' << fmt_double(b.x()) << ',' << fmt_double(b.y()) << ',' << fmt_double(b.z()) << '\n';
  }
}

std::vector<Line3D> load_lines_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<Line3D> out;
  std::string row;
  bool header = true;
  while (std::getline(in, row)) {
    if (is_blank_or_comment(row)) continue;
    if (header) {
      header = false;
      if (row.rfind("line_id", 0) == 0) continue;
    }
    std::vector<double> v;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(parse_double(cell));
    if (v.size() != 7) throw std::runtime_error(path + ": expected 7 columns");
    const Vec3 a(v[1], v[2], v[3]), b(v[4], v[5], v[6]);
    if ((b - a).norm() == 0) throw std::runtime_error(path + ": zero-length line");
    Line3D l = Line3D::through(a, b);
    l.endpoints = std::make_pair(a, b);
    out.push_back(l);
  }
  return out;
}

void save_lines_ply(const std::string& path, std::span<const Line3D> lines) {
  std::vector<const Line3D*> with;
  for (const auto& l : lines)
    if (l.endpoints) with.push_back(&l);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << 2 * with.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nelement edge " << with.size()
      << "\nproperty int vertex1\nproperty int vertex2\nend_header\n";
  for (const auto* l : with)
    for (const Vec3& p : {l->endpoints->first, l->endpoints->second})
      out << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' ' << fmt_double(p.z()) << '\n';
  for (std::size_t i = 0; i < with.size(); ++i) out << 2 * i << ' ' << 2 * i + 1 << '\n';
}

}  // namespace evline
