#include "evline/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "evline/detect.hpp"
#include "evline/geom.hpp"
#include "evline/io.hpp"

namespace evline {

namespace {

// Length of the overlap of b's extent with a's, measured along a.
double overlap_along(const LineSegment2D& a, const LineSegment2D& b) {
  const Vec2 d = a.direction();
  double b0 = d.dot(b.p1 - a.p1), b1 = d.dot(b.p2 - a.p1);
  if (b0 > b1) std::swap(b0, b1);
  return std::min(a.length(), b1) - std::max(0.0, b0);
}

Mat3 fundamental(const CameraPose& a, const CameraPose& b, const Intrinsics& K) {
  const Vec3 base = a.t - b.t;
  if (base.norm() < 1e-12) throw DegenerateError("epipolar_score: zero baseline");
  const Mat3 R_ba = b.R.transpose() * a.R;
  const Vec3 t_ba = b.R.transpose() * base;
  Mat3 tx;
  tx << 0, -t_ba.z(), t_ba.y(), t_ba.z(), 0, -t_ba.x(), -t_ba.y(), t_ba.x(), 0;
  const Mat3 Kinv = K.K().inverse();
  return Kinv.transpose() * tx * R_ba * Kinv;
}

double one_way(const LineSegment2D& la, const LineSegment2D& lb, const Mat3& F, double tol,
               int samples) {
  const Vec3 hb = homogeneous_line(lb);
  const Vec2 db = lb.direction();
  const double len = lb.length();
  int hit = 0;
  for (int k = 0; k < samples; ++k) {
    const Vec2 p = la.p1 + (la.p2 - la.p1) * ((k + 0.5) / samples);
    const Vec3 epi = F * Vec3(p.x(), p.y(), 1.0);
    const Vec3 x = epi.cross(hb);
    if (std::abs(x.z()) < 1e-12 * x.head<2>().norm() || x.head<2>().norm() == 0) continue;
    const Vec2 q = x.head<2>() / x.z();
    const double s = db.dot(q - lb.p1);
    hit += s >= -tol && s <= len + tol;
  }
  return double(hit) / samples;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
};

std::vector<const TrackObservation*> representatives(const LineTrack& t, int stride) {
  std::vector<const TrackObservation*> r;
  for (std::size_t i = 0; i < t.observations.size(); ++i) {
    const auto& o = t.observations[i];
    if (i == 0 || i + 1 == t.observations.size() || (stride > 0 && o.frame_id % stride == 0))
      r.push_back(&o);
  }
  return r;
}

bool consistent(const Line3D& L, std::span<const TrackObservation* const> reps,
                std::span<const FrameLines> frames, const Intrinsics& K, double tol, double q) {
  std::vector<double> err;
  for (const auto* o : reps) {
    const CameraPose& pose = frames[o->frame_index].pose;
    Vec3 h;
    try {
      h = project_line(L, pose, K);
    } catch (const DegenerateError&) {
      return false;
    }
    const auto& s = o->line.refined;
    const double e1 = std::abs(h.x() * s.p1.x() + h.y() * s.p1.y() + h.z());
    const double e2 = std::abs(h.x() * s.p2.x() + h.y() * s.p2.y() + h.z());
    err.push_back(std::max(e1, e2));
  }
  if (err.empty()) return false;
  const std::size_t k = std::min(err.size() - 1, std::size_t(q * double(err.size())));
  std::nth_element(err.begin(), err.begin() + k, err.end());
  return err[k] <= tol;
}

bool disjoint(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return false;
    if (a[i] < b[j])
      ++i;
    else
      ++j;
  }
  return true;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> local_match(std::span<const LineSegment2D> prev,
                                                             std::span<const LineSegment2D> curr,
                                                             double max_dist, double max_angle_deg) {
  const double inf = std::numeric_limits<double>::infinity();
  const double max_angle = deg2rad(max_angle_deg);
  const std::size_t n = prev.size(), m = curr.size();
  std::vector<double> D(n * m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    if (prev[i].length() <= 0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      if (curr[j].length() <= 0) continue;
      if (line_angle(prev[i], curr[j]) > max_angle) continue;
      if (overlap_along(prev[i], curr[j]) <= 0) continue;
      const double d = perpendicular_distance(prev[i], curr[j]);
      if (d <= max_dist) D[i * m + j] = d;
    }
  }
  std::vector<std::size_t> best_j(n, m), best_i(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = D[i * m + j];
      if (d == inf) continue;
      if (best_j[i] == m || d < D[i * m + best_j[i]]) best_j[i] = j;
      if (best_i[j] == n || d < D[best_i[j] * m + j]) best_i[j] = i;
    }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    if (best_j[i] < m && best_i[best_j[i]] == i) out.emplace_back(i, best_j[i]);
  return out;
}

double epipolar_score(const LineSegment2D& la, const CameraPose& pose_a, const LineSegment2D& lb,
                      const CameraPose& pose_b, const Intrinsics& K, double tol, int samples) {
  if (la.length() <= 0 || lb.length() <= 0) throw DegenerateError("epipolar_score: empty segment");
  const Mat3 F_ab = fundamental(pose_a, pose_b, K);
  return std::min(one_way(la, lb, F_ab, tol, samples),
                  one_way(lb, la, F_ab.transpose(), tol, samples));
}

std::vector<LineTrack> local_tracks(std::span<const FrameLines> frames, const MatchConfig& cfg) {
  std::vector<LineTrack> tracks;
  std::vector<std::size_t> open;  // track index per line of the previous frame
  std::vector<LineSegment2D> prev;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fl = frames[f];
    std::vector<LineSegment2D> curr;
    for (const auto& l : fl.lines) curr.push_back(l.refined);
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> next(curr.size(), kNone);
    std::vector<bool> continued(prev.size(), false);
    for (auto [i, j] : local_match(prev, curr, cfg.max_dist, cfg.max_angle_deg)) {
      next[j] = open[i];
      continued[i] = true;
    }
    for (std::size_t i = 0; i < prev.size(); ++i)
      if (!continued[i]) tracks[open[i]].status = TrackStatus::kClosed;
    for (std::size_t j = 0; j < curr.size(); ++j) {
      if (next[j] == kNone) {
        LineTrack t;
        t.track_id = int(tracks.size());
        next[j] = tracks.size();
        tracks.push_back(std::move(t));
      }
      tracks[next[j]].observations.push_back({fl.frame_id, f, fl.lines[j]});
    }
    open = std::move(next);
    prev = std::move(curr);
  }
  for (auto& t : tracks) t.status = TrackStatus::kClosed;
  return tracks;
}

std::vector<std::vector<std::size_t>> nearest_frames(std::span<const FrameLines> frames,
                                                     std::size_t k) {
  std::vector<std::vector<std::size_t>> out(frames.size());
  std::vector<std::size_t> idx(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::iota(idx.begin(), idx.end(), 0);
    const Vec3 c = frames[f].pose.center();
    auto dist = [&](std::size_t i) { return (frames[i].pose.center() - c).squaredNorm(); };
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
    for (std::size_t i : idx) {
      if (i == f) continue;
      if (out[f].size() == k) break;
      out[f].push_back(i);
    }
    std::sort(out[f].begin(), out[f].end());
  }
  return out;
}

std::vector<LineTrack> global_merge(std::vector<LineTrack> tracks, std::span<const FrameLines> frames,
                                    const Intrinsics& K, const MatchConfig& cfg) {
  const std::size_t T = tracks.size();
  if (T < 2) return tracks;
  const auto near = nearest_frames(frames, cfg.neighbors);
  auto is_near = [&](std::size_t a, std::size_t b) {
    return std::binary_search(near[a].begin(), near[a].end(), b);
  };

  std::vector<std::vector<const TrackObservation*>> reps(T);
  std::vector<std::vector<int>> frame_set(T);
  for (std::size_t i = 0; i < T; ++i) {
    reps[i] = representatives(tracks[i], cfg.stride);
    for (const auto& o : tracks[i].observations) frame_set[i].push_back(o.frame_id);
    std::sort(frame_set[i].begin(), frame_set[i].end());
  }

  // Operates on union-find roots so a merge is checked against every track
  // already in either group.
  auto agree = [&](std::size_t A, std::size_t B) {
    int count = 0;
    std::vector<const TrackObservation*> both = reps[A];
    both.insert(both.end(), reps[B].begin(), reps[B].end());
    for (const auto* ra : reps[A])
      for (const auto* rb : reps[B]) {
        if (!is_near(ra->frame_index, rb->frame_index)) continue;
        const CameraPose& pa = frames[ra->frame_index].pose;
        const CameraPose& pb = frames[rb->frame_index].pose;
        double s;
        try {
          s = epipolar_score(ra->line.refined, pa, rb->line.refined, pb, K, cfg.epipolar_tol,
                             cfg.epipolar_samples);
        } catch (const DegenerateError&) {
          continue;
        }
        if (s < cfg.score_thresh) continue;
        Line3D L;
        try {
          L = intersect_planes(backproject_line(ra->line.refined, pa, K),
                               backproject_line(rb->line.refined, pb, K), deg2rad(1.0));
        } catch (const DegenerateError&) {
          continue;
        }
        if (!consistent(L, both, frames, K, cfg.consistency_px, cfg.consistency_quantile)) continue;
        if (++count >= cfg.min_agreeing) return true;
      }
    return false;
  };

  UnionFind uf(T);
  std::vector<std::vector<int>> root_frames = frame_set;
  for (std::size_t a = 0; a < T; ++a)
    for (std::size_t b = a + 1; b < T; ++b) {
      const std::size_t ra = uf.find(a), rb = uf.find(b);
      if (ra == rb) continue;
      if (!disjoint(root_frames[ra], root_frames[rb])) continue;
      if (!agree(ra, rb)) continue;
      std::vector<int> merged;
      std::merge(root_frames[ra].begin(), root_frames[ra].end(), root_frames[rb].begin(),
                 root_frames[rb].end(), std::back_inserter(merged));
      const std::size_t keep = std::min(ra, rb), drop = std::max(ra, rb);
      uf.parent[drop] = keep;
      root_frames[keep] = std::move(merged);
      root_frames[drop].clear();
      reps[keep].insert(reps[keep].end(), reps[drop].begin(), reps[drop].end());
      reps[drop].clear();
    }

  std::vector<LineTrack> out;
  std::vector<std::size_t> slot(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t r = uf.find(i);
    if (slot[r] == T) {
      slot[r] = out.size();
      LineTrack t;
      t.track_id = tracks[r].track_id;
      t.status = tracks[r].status;
      out.push_back(std::move(t));
    }
    auto& obs = out[slot[r]].observations;
    obs.insert(obs.end(), tracks[i].observations.begin(), tracks[i].observations.end());
  }
  for (auto& t : out)
    std::stable_sort(t.observations.begin(), t.observations.end(),
                     [](const TrackObservation& a, const TrackObservation& b) {
                       return a.frame_index < b.frame_index;
                     });
  return out;
}

std::vector<LineTrack> build_tracks(std::span<const FrameLines> frames, const Intrinsics& K,
                                    const MatchConfig& cfg) {
  auto tracks = global_merge(local_tracks(frames, cfg), frames, K, cfg);
  std::erase_if(tracks, [&](const LineTrack& t) { return t.size() < cfg.min_track_len; });
  std::stable_sort(tracks.begin(), tracks.end(), [](const LineTrack& a, const LineTrack& b) {
    return a.observations.front().frame_index < b.observations.front().frame_index;
  });
  for (std::size_t i = 0; i < tracks.size(); ++i) tracks[i].track_id = int(i);
  return tracks;
}

void save_tracks_csv(const std::string& path, std::span<const LineTrack> tracks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "track_id,frame_id,x1,y1,x2,y2\n";
  for (const auto& t : tracks)
    for (const auto& o : t.observations) {
      const auto& s = o.line.refined;
      out << t.track_id << ',' << o.frame_id << ',' << fmt_double(s.p1.x()) << ','
          << fmt_double(s.p1.y()) << ',' << fmt_double(s.p2.x()) << ',' << fmt_double(s.p2.y())
          << '\n';
    }
}

}  // namespace evline
