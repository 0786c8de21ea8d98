#include "evline/detect.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "evline/io.hpp"

namespace evline {

namespace {

using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Neighbour offsets P2..P9, clockwise from north.
constexpr std::array<int, 8> kDy = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kDx = {0, 1, 1, 1, 0, -1, -1, -1};

std::array<std::uint8_t, 8> ring(const Mask& m, int y, int x) {
  std::array<std::uint8_t, 8> r{};
  for (int k = 0; k < 8; ++k) {
    const int yy = y + kDy[k], xx = x + kDx[k];
    r[k] = (yy >= 0 && xx >= 0 && yy < m.rows() && xx < m.cols()) ? m(yy, xx) : 0;
  }
  return r;
}

int transitions(const std::array<std::uint8_t, 8>& r) {
  int t = 0;
  for (int k = 0; k < 8; ++k) t += (!r[k] && r[(k + 1) % 8]);
  return t;
}

int count(const std::array<std::uint8_t, 8>& r) {
  int c = 0;
  for (auto v : r) c += v != 0;
  return c;
}

// Zhang-Suen thinning.
void thin(Mask& m) {
  std::vector<std::pair<int, int>> del;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      del.clear();
      for (int y = 0; y < m.rows(); ++y)
        for (int x = 0; x < m.cols(); ++x) {
          if (!m(y, x)) continue;
          const auto r = ring(m, y, x);
          const int b = count(r);
          if (b < 2 || b > 6 || transitions(r) != 1) continue;
          // r[0]=P2 r[2]=P4 r[4]=P6 r[6]=P8
          if (pass == 0) {
            if (r[0] && r[2] && r[4]) continue;
            if (r[2] && r[4] && r[6]) continue;
          } else {
            if (r[0] && r[2] && r[6]) continue;
            if (r[0] && r[4] && r[6]) continue;
          }
          del.emplace_back(y, x);
        }
      for (auto [y, x] : del) m(y, x) = 0;
      changed |= !del.empty();
    }
  }
}

using Chain = std::vector<Vec2>;

std::vector<Chain> trace_chains(const Mask& m) {
  const int H = static_cast<int>(m.rows()), W = static_cast<int>(m.cols());
  // 0 background, 1 chain, 2 end, 3 junction
  Mask kind = Mask::Zero(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!m(y, x)) continue;
      const auto r = ring(m, y, x);
      const int c = count(r);
      if (c == 0) continue;
      const int t = transitions(r);
      kind(y, x) = t >= 3 || c >= 5 ? 3 : (t == 1 ? 2 : 1);
    }
  Mask visited = Mask::Zero(H, W);
  std::vector<Chain> chains;

  auto walk = [&](int y, int x, Chain& chain, int jy, int jx) {
    while (true) {
      visited(y, x) = 1;
      chain.emplace_back(x, y);
      int ny = -1, nx = -1, juy = -1, jux = -1;
      // 4-connected neighbours first so staircases are followed step by step.
      for (int k : {0, 2, 4, 6, 1, 3, 5, 7}) {
        const int yy = y + kDy[k], xx = x + kDx[k];
        if (yy < 0 || xx < 0 || yy >= H || xx >= W || !kind(yy, xx)) continue;
        if (kind(yy, xx) == 3) {
          if (juy < 0 && !(yy == jy && xx == jx && chain.size() <= 2)) {
            juy = yy;
            jux = xx;
          }
          continue;
        }
        if (!visited(yy, xx) && ny < 0) {
          ny = yy;
          nx = xx;
        }
      }
      if (ny >= 0) {
        y = ny;
        x = nx;
        continue;
      }
      if (juy >= 0) chain.emplace_back(jux, juy);
      return;
    }
  };

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (kind(y, x) == 2 && !visited(y, x)) {
        Chain c;
        walk(y, x, c, -1, -1);
        chains.push_back(std::move(c));
      }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (kind(y, x) != 3) continue;
      for (int k : {0, 2, 4, 6, 1, 3, 5, 7}) {
        const int yy = y + kDy[k], xx = x + kDx[k];
        if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
        if (kind(yy, xx) == 1 || kind(yy, xx) == 2) {
          if (visited(yy, xx)) continue;
          Chain c{Vec2(x, y)};
          walk(yy, xx, c, y, x);
          chains.push_back(std::move(c));
        }
      }
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (kind(y, x) == 1 && !visited(y, x)) {
        Chain c;
        walk(y, x, c, -1, -1);
        chains.push_back(std::move(c));
      }
  return chains;
}

double chord_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double l = ab.norm();
  if (l < 1e-12) return (p - a).norm();
  return std::abs(ab.x() * (p.y() - a.y()) - ab.y() * (p.x() - a.x())) / l;
}

void split(const Chain& c, std::size_t i, std::size_t j, double tol,
           std::vector<std::pair<std::size_t, std::size_t>>& out) {
  double best = -1;
  std::size_t k = i;
  for (std::size_t m = i + 1; m < j; ++m) {
    const double d = chord_dist(c[m], c[i], c[j]);
    if (d > best) {
      best = d;
      k = m;
    }
  }
  if (best > tol) {
    split(c, i, k, tol, out);
    split(c, k, j, tol, out);
  } else {
    out.emplace_back(i, j);
  }
}

bool fit_piece(const Chain& c, std::size_t i, std::size_t j, LineSegment2D& seg) {
  const std::size_t n = j - i + 1;
  if (n < 2) return false;
  Vec2 mean = Vec2::Zero();
  for (std::size_t k = i; k <= j; ++k) mean += c[k];
  mean /= double(n);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t k = i; k <= j; ++k) cov += (c[k] - mean) * (c[k] - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Vec2 d = es.eigenvectors().col(1);
  seg.p1 = mean + d * d.dot(c[i] - mean);
  seg.p2 = mean + d * d.dot(c[j] - mean);
  return seg.length() > 0;
}

// Gap between the extents of a and b measured along a's direction
// (negative when they overlap).
double axial_gap(const LineSegment2D& a, const LineSegment2D& b) {
  const Vec2 d = a.direction();
  const double a0 = 0, a1 = a.length();
  double b0 = d.dot(b.p1 - a.p1), b1 = d.dot(b.p2 - a.p1);
  if (b0 > b1) std::swap(b0, b1);
  return std::max(b0 - a1, a0 - b1);
}

LineSegment2D join(const LineSegment2D& a, const LineSegment2D& b) {
  const double la = a.length(), lb = b.length();
  Vec2 db = b.direction();
  if (db.dot(a.direction()) < 0) db = -db;
  const Vec2 d = (la * a.direction() + lb * db).normalized();
  const Vec2 c = (la * a.midpoint() + lb * b.midpoint()) / (la + lb);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Vec2& p : {a.p1, a.p2, b.p1, b.p2}) {
    const double s = d.dot(p - c);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  LineSegment2D out = a;
  out.p1 = c + lo * d;
  out.p2 = c + hi * d;
  return out;
}

void join_collinear(std::vector<LineSegment2D>& segs, const DetectorConfig& cfg) {
  const double max_angle = deg2rad(cfg.join_angle_deg);
  bool changed = true;
  while (changed) {
    changed = false;
    std::stable_sort(segs.begin(), segs.end(), [](const LineSegment2D& a, const LineSegment2D& b) {
      return a.length() > b.length();
    });
    for (std::size_t i = 0; i < segs.size() && !changed; ++i)
      for (std::size_t j = i + 1; j < segs.size(); ++j) {
        if (line_angle(segs[i], segs[j]) > max_angle) continue;
        if (perpendicular_distance(segs[i], segs[j]) > cfg.join_dist) continue;
        if (axial_gap(segs[i], segs[j]) > cfg.join_gap) continue;
        segs[i] = join(segs[i], segs[j]);
        segs.erase(segs.begin() + j);
        changed = true;
        break;
      }
  }
}

// Thinning erodes chain ends; walk each end outwards while the
// unthinned support continues along the line.
void extend_ends(LineSegment2D& s, const Mask& support, double max_ext) {
  const auto on = [&](const Vec2& p) {
    const long x = std::lround(p.x()), y = std::lround(p.y());
    return x >= 0 && y >= 0 && y < support.rows() && x < support.cols() && support(y, x);
  };
  const Vec2 d = s.direction();
  for (double step = 0.5; step <= max_ext && on(s.p2 + step * d); step += 0.5) s.p2 += 0.5 * d;
  for (double step = 0.5; step <= max_ext && on(s.p1 - step * d); step += 0.5) s.p1 -= 0.5 * d;
}

}  // namespace

std::vector<LineSegment2D> detect_segments(const Image& image, const DetectorConfig& cfg) {
  const int H = static_cast<int>(image.rows()), W = static_cast<int>(image.cols());
  std::vector<LineSegment2D> segs;
  if (H < 3 || W < 3) return segs;
  const float peak = image.maxCoeff();
  if (!(peak > 0.0f)) return segs;
  const Image norm = image / peak;

  // 3x3 box smoothing, then threshold.
  Mask mask = Mask::Zero(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < H && xx < W) s += norm(yy, xx);
        }
      mask(y, x) = s / 9.0 > cfg.threshold;
    }
  const Mask support = mask;
  thin(mask);

  for (const Chain& c : trace_chains(mask)) {
    if (c.size() < 2) continue;
    std::vector<std::pair<std::size_t, std::size_t>> pieces;
    split(c, 0, c.size() - 1, cfg.split_tol, pieces);
    for (auto [i, j] : pieces) {
      LineSegment2D s;
      if ((c[j] - c[i]).norm() < 3.0 || !fit_piece(c, i, j, s)) continue;
      segs.push_back(s);
    }
  }
  join_collinear(segs, cfg);
  for (auto& s : segs) extend_ends(s, support, 3.0);
  std::erase_if(segs, [&](const LineSegment2D& s) { return s.length() < cfg.min_length; });
  return segs;
}

double perpendicular_distance(const LineSegment2D& a, const LineSegment2D& b) {
  if (a.length() == 0.0 || b.length() == 0.0)
    throw DegenerateError("perpendicular_distance: zero-length segment");
  return std::max({point_line_distance(a.p1, b), point_line_distance(a.p2, b),
                   point_line_distance(b.p1, a), point_line_distance(b.p2, a)});
}

std::vector<LineSegment2D> merge_detections(std::vector<LineSegment2D> cand, double merge_dist,
                                            double angle_tol_deg) {
  if (!(merge_dist > 0)) throw std::invalid_argument("merge_detections: merge_dist must be > 0");
  const double tol = deg2rad(angle_tol_deg);
  std::stable_sort(cand.begin(), cand.end(), [](const LineSegment2D& a, const LineSegment2D& b) {
    return a.length() > b.length();
  });
  std::vector<LineSegment2D> kept;
  for (const auto& s : cand) {
    if (s.length() == 0.0) continue;
    bool dup = false;
    for (const auto& k : kept)
      if (line_angle(s, k) < tol && perpendicular_distance(s, k) < merge_dist) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(s);
  }
  return kept;
}

std::vector<LineSegment2D> mwmr_detect_raw(const EventFrame& frame, const MwmrConfig& cfg) {
  std::vector<LineSegment2D> all;
  for (const auto& im : frame.images) {
    for (auto s : detect_segments(im.image, cfg.detector)) {
      s.frame_id = frame.frame_id;
      s.t_obs = frame.t_center;
      s.source = im.kind;
      s.source_window = im.window_index;
      all.push_back(s);
    }
  }
  return all;
}

std::vector<LineSegment2D> mwmr_detect(const EventFrame& frame, const MwmrConfig& cfg) {
  return merge_detections(mwmr_detect_raw(frame, cfg), cfg.merge_dist, cfg.angle_tol_deg);
}

DetectionScore score_detections(std::span<const LineSegment2D> det,
                                std::span<const LineSegment2D> gt, double dist_tol,
                                double angle_tol_deg) {
  DetectionScore sc;
  sc.n_detections = det.size();
  const double tol = deg2rad(angle_tol_deg);
  std::vector<std::vector<std::pair<double, double>>> covered(gt.size());
  std::size_t tp = 0;
  for (const auto& d : det) {
    if (d.length() == 0) continue;
    bool ok = false;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const auto& G = gt[g];
      if (G.length() == 0 || line_angle(d, G) > tol) continue;
      if (point_line_distance(d.p1, G) > dist_tol || point_line_distance(d.p2, G) > dist_tol) continue;
      const Vec2 u = G.direction();
      double s0 = u.dot(d.p1 - G.p1), s1 = u.dot(d.p2 - G.p1);
      if (s0 > s1) std::swap(s0, s1);
      const double lo = std::max(0.0, s0), hi = std::min(G.length(), s1);
      if (hi - lo < 0.5 * d.length()) continue;
      covered[g].emplace_back(lo, hi);
      ok = true;
    }
    tp += ok;
  }
  double total = 0, cov = 0;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    total += gt[g].length();
    auto& iv = covered[g];
    std::sort(iv.begin(), iv.end());
    double end = -1;
    for (auto [lo, hi] : iv) {
      if (hi <= end) continue;
      cov += hi - std::max(lo, end);
      end = hi;
    }
  }
  sc.precision = det.empty() ? 0.0 : double(tp) / double(det.size());
  sc.recall = total > 0 ? cov / total : 0.0;
  sc.f_score = sc.precision + sc.recall > 0
                   ? 2 * sc.precision * sc.recall / (sc.precision + sc.recall)
                   : 0.0;
  return sc;
}

void save_segments_2d_csv(const std::string& path, std::span<const LineSegment2D> segs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "frame_id,x1,y1,x2,y2,source\n";
  for (const auto& s : segs)
    out << s.frame_id << ',' << fmt_double(s.p1.x()) << ',' << fmt_double(s.p1.y()) << ','
        << fmt_double(s.p2.x()) << ',' << fmt_double(s.p2.y()) << ',' << to_string(s.source)
        << "/w" << s.source_window << '\n';
}

}  // namespace evline
