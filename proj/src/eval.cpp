#include "evline/eval.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "evline/io.hpp"

namespace evline {

namespace {

constexpr std::uint32_t kLeafSize = 8;

Eigen::Matrix3Xd as_matrix(std::span<const Vec3> pts) {
  Eigen::Matrix3Xd m(3, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(i) = pts[i];
  return m;
}

RigidTransform umeyama_rigid(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& dst) {
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  return {T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>()};
}

void require_spread(std::span<const Vec3> pts, const char* what) {
  if (pts.size() < 3) throw std::invalid_argument(std::string(what) + ": fewer than 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
  if (ev[2] <= 0.0 || ev[1] <= 1e-12 * ev[2])
    throw std::invalid_argument(std::string(what) + ": points are collinear");
}

double mean_nn(std::span<const Vec3> from, std::span<const Vec3> to, const char* what) {
  if (from.empty() || to.empty()) throw std::invalid_argument(std::string(what) + ": empty point set");
  const KdTree tree(to);
  double sum = 0.0;
  for (const auto& p : from) sum += tree.distance(p);
  return sum / double(from.size());
}

std::size_t count_within(std::span<const Vec3> from, const KdTree& to, double delta) {
  if (to.empty()) return 0;
  std::size_t c = 0;
  for (const auto& p : from) c += to.distance(p) <= delta;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// KdTree
// ---------------------------------------------------------------------------

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, std::uint32_t(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = std::int32_t(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](auto a, auto b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_sq) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      const double d = (points_[order_[i]] - q).squaredNorm();
      if (d < best_sq) {
        best_sq = d;
        best = order_[i];
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const auto near = diff < 0 ? n.left : n.right;
  const auto far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_sq);
  if (diff * diff <= best_sq) search(far, q, best, best_sq);
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::invalid_argument("KdTree: query on an empty set");
  std::size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, q, best, best_sq);
  // Recompute from the winner so the value matches a direct norm exactly.
  return {best, (points_[best] - q).norm()};
}

// ---------------------------------------------------------------------------
// Map metrics
// ---------------------------------------------------------------------------

std::vector<Vec3> sample_line_points(std::span<const Line3D> lines, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("sample_line_points: spacing must be positive");
  std::vector<Vec3> out;
  for (const auto& l : lines) {
    if (!l.endpoints) continue;
    const auto& [a, b] = *l.endpoints;
    const double len = (b - a).norm();
    const auto n = std::size_t(std::floor(len / spacing + 1e-9)) + 1;
    if (n == 1) {
      out.push_back(a);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) out.push_back(a + (b - a) * (double(i) / double(n - 1)));
  }
  return out;
}

double accuracy(std::span<const Vec3> predicted, std::span<const Vec3> gt_dense) {
  return mean_nn(predicted, gt_dense, "accuracy");
}

double completion(std::span<const Vec3> gt_edge, std::span<const Vec3> predicted) {
  return mean_nn(gt_edge, predicted, "completion");
}

double iou(std::span<const Vec3> predicted, std::span<const Vec3> gt_edge, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("iou: threshold must be positive");
  if (predicted.empty() && gt_edge.empty()) throw std::invalid_argument("iou: both sets are empty");
  const KdTree tp(predicted), tg(gt_edge);
  const double c_pred = double(count_within(predicted, tg, delta));
  const double c_gt = double(count_within(gt_edge, tp, delta));
  return std::min(c_pred, c_gt) /
         (double(predicted.size()) + double(gt_edge.size()) - std::max(c_pred, c_gt));
}

MetricReport evaluate_map(std::span<const Line3D> lines, std::span<const Vec3> gt_edge,
                          double spacing, std::span<const double> thresholds) {
  MetricReport r;
  for (const auto& l : lines) r.n_rep += l.endpoints.has_value();
  if (r.n_rep == 0)
    throw std::invalid_argument("evaluate: the map has no finite line segments");
  const auto pts = sample_line_points(lines, spacing);
  r.n_points = pts.size();
  r.accuracy = accuracy(pts, gt_edge);
  r.completion = completion(gt_edge, pts);
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double d : thresholds) r.iou.push_back(iou(pts, gt_edge, d));
  return r;
}

std::string report_text(const MetricReport& r) {
  std::ostringstream out;
  out << "accuracy: " << fmt_double(r.accuracy) << '\n'
      << "completion: " << fmt_double(r.completion) << '\n';
  for (std::size_t i = 0; i < r.iou.size(); ++i)
    out << "iou@" << fmt_double(r.thresholds[i]) << ": " << fmt_double(r.iou[i]) << '\n';
  out << "n_rep: " << r.n_rep << '\n' << "n_points: " << r.n_points << '\n';
  return out.str();
}

std::string report_csv(const MetricReport& r) {
  std::ostringstream head, row;
  head << "accuracy,completion";
  row << fmt_double(r.accuracy) << ',' << fmt_double(r.completion);
  for (std::size_t i = 0; i < r.iou.size(); ++i) {
    head << ",iou@" << fmt_double(r.thresholds[i]);
    row << ',' << fmt_double(r.iou[i]);
  }
  head << ",n_rep,n_points\n";
  row << ',' << r.n_rep << ',' << r.n_points << '\n';
  return head.str() + row.str();
}

// ---------------------------------------------------------------------------
// Poses and registration
// ---------------------------------------------------------------------------

double ate(std::span<const CameraPose> estimate, std::span<const CameraPose> gt, bool align) {
  if (estimate.size() != gt.size())
    throw std::invalid_argument("ate: trajectories differ in length");
  if (estimate.empty()) throw std::invalid_argument("ate: empty trajectory");
  std::vector<Vec3> est(estimate.size()), ref(gt.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    est[i] = estimate[i].center();
    ref[i] = gt[i].center();
  }
  RigidTransform T;
  if (align) {
    if (est.size() < 3) throw std::invalid_argument("ate: alignment needs at least 3 poses");
    T = umeyama_rigid(as_matrix(est), as_matrix(ref));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (T.apply(est[i]) - ref[i]).squaredNorm();
  return std::sqrt(sum / double(est.size()));
}

double rotation_error_deg(const Mat3& estimate, const Mat3& gt) {
  const double c = std::clamp(((estimate.transpose() * gt).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

double translation_error(const Vec3& estimate, const Vec3& gt) { return (estimate - gt).norm(); }

IcpResult icp_register(std::span<const Vec3> source, std::span<const Vec3> target,
                       const RigidTransform& init, int max_iterations, double tolerance) {
  require_spread(source, "icp source");
  require_spread(target, "icp target");
  const KdTree tree(target);
  const auto src = as_matrix(source);
  Eigen::Matrix3Xd matched(3, source.size());

  IcpResult res;
  res.transform = init;
  const auto correspond = [&](const RigidTransform& T) {
    double sum = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const auto [j, d] = tree.nearest(T.apply(source[i]));
      matched.col(i) = target[j];
      sum += d * d;
    }
    return sum / double(source.size());
  };

  double err = correspond(res.transform);
  res.residuals.push_back(err);
  for (int it = 0; it < max_iterations; ++it) {
    const RigidTransform next = umeyama_rigid(src, matched);
    const double next_err = correspond(next);
    // The closed-form step cannot increase the error for fixed pairs and
    // re-pairing cannot either; guard against roundoff all the same.
    if (next_err > err) break;
    res.transform = next;
    res.residuals.push_back(next_err);
    res.iterations = it + 1;
    const bool done = err - next_err <= tolerance * std::max(1.0, err);
    err = next_err;
    if (done) break;
  }
  return res;
}

RegistrationSummary registration_experiment(std::span<const Line3D> lines,
                                            std::span<const Vec3> gt_points,
                                            const RegistrationOptions& opt) {
  if (opt.n_trials <= 0) throw std::invalid_argument("registration: n_trials must be positive");
  const auto pts = sample_line_points(lines, opt.spacing);
  require_spread(pts, "registration map");
  require_spread(gt_points, "registration target");

  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= double(pts.size());

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> rot(0.0, deg2rad(opt.rot_std_deg));
  std::normal_distribution<double> trans(0.0, opt.trans_std);

  RegistrationSummary s;
  std::vector<Vec3> moved(pts.size());
  for (int k = 0; k < opt.n_trials; ++k) {
    const Mat3 R = euler_zyx(rot(rng), rot(rng), rot(rng));
    const Vec3 dt(trans(rng), trans(rng), trans(rng));
    const RigidTransform P{R, c + dt - R * c};
    for (std::size_t i = 0; i < pts.size(); ++i) moved[i] = P.apply(pts[i]);
    const auto fit = icp_register(moved, gt_points, {}, opt.max_iterations);
    const RigidTransform total = fit.transform * P;
    s.rot_err_deg.push_back(rotation_error_deg(total.R, Mat3::Identity()));
    s.trans_err.push_back(translation_error(total.t, Vec3::Zero()));
  }
  s.mean_rot_err_deg = std::accumulate(s.rot_err_deg.begin(), s.rot_err_deg.end(), 0.0) / opt.n_trials;
  s.mean_trans_err = std::accumulate(s.trans_err.begin(), s.trans_err.end(), 0.0) / opt.n_trials;
  return s;
}

SegmentRecovery segment_recovery(std::span<const Line3D> lines, std::span<const Segment3D> gt,
                                 double max_accuracy, double min_coverage, double spacing) {
  SegmentRecovery out;
  std::vector<std::vector<Vec3>> samples;
  for (const auto& l : lines)
    samples.push_back(l.endpoints ? sample_line_points(std::span(&l, 1), spacing) : std::vector<Vec3>{});

  for (const auto& g : gt) {
    const double len = g.length();
    const Vec3 u = (g.b - g.a) / len;
    const auto along = [&](const Vec3& p) { return std::clamp((p - g.a).dot(u), 0.0, len); };
    std::vector<std::pair<double, double>> spans;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (samples[i].empty()) continue;
      double sum = 0.0;
      for (const auto& p : samples[i]) sum += (p - (g.a + along(p) * u)).norm();
      if (sum / double(samples[i].size()) >= max_accuracy) continue;
      const auto& [a, b] = *lines[i].endpoints;
      spans.emplace_back(std::minmax(along(a), along(b)));
    }
    std::sort(spans.begin(), spans.end());
    double covered = 0.0, reach = 0.0;
    for (auto [lo, hi] : spans) {
      lo = std::max(lo, reach);
      if (hi > lo) covered += hi - lo;
      reach = std::max(reach, hi);
    }
    out.coverage.push_back(len > 0 ? covered / len : 0.0);
    out.recovered.push_back(out.coverage.back() >= min_coverage);
  }
  if (!gt.empty())
    out.rate = double(std::count(out.recovered.begin(), out.recovered.end(), true)) / double(gt.size());
  return out;
}

}  // namespace evline
