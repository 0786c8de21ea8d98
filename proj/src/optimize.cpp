#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

#include "evline/kernels.hpp"
#include "evline/recon.hpp"

namespace evline {

namespace {

using J10 = ceres::Jet<double, 10>;

struct LineState {
  Mat3 U = Mat3::Identity();
  double phi = 0.0;
};

// Built directly rather than through the rotation vector, whose log map
// loses precision near a half turn.
LineState line_state(const Line3D& L) {
  const Vec3 d = L.d.normalized();
  const double mn = L.m.norm();
  const Vec3 u2 = mn > 1e-12 ? Vec3(L.m / mn) : Vec3(d.unitOrthogonal());
  LineState s;
  s.U.col(0) = d;
  s.U.col(1) = u2;
  s.U.col(2) = d.cross(u2).normalized();
  s.phi = std::atan(mn);
  return s;
}

// One observation's precomputed measurement data.
struct ObsData {
  std::size_t line = 0;
  std::size_t pose = 0;
  double sqrt_w = 1.0;
  Vec3 plane_n = Vec3::UnitZ();  ///< viewing plane normal, camera frame
  Vec2 p1 = Vec2::Zero(), p2 = Vec2::Zero();
  std::vector<Vec3> bearings;  ///< unit, camera frame
};

struct Problem {
  const Intrinsics* K = nullptr;
  const ReconConfig* cfg = nullptr;
  OptimizeOptions opt;
  std::vector<ObsData> obs;
  std::size_t n_lines = 0, n_poses = 0;

  int line_offset(std::size_t j) const { return opt.refine_lines ? int(4 * j) : -1; }
  int pose_offset(std::size_t i) const {
    if (!opt.refine_poses || i == 0) return -1;
    return int((opt.refine_lines ? 4 * n_lines : 0) + 6 * (i - 1));
  }
  std::size_t n_params() const {
    return (opt.refine_lines ? 4 * n_lines : 0) + (opt.refine_poses && n_poses > 0 ? 6 * (n_poses - 1) : 0);
  }
};

Problem make_problem(std::span<const MapLine> lines, std::size_t n_poses, const Intrinsics& K,
                     const ReconConfig& cfg, const OptimizeOptions& opt) {
  Problem P;
  P.K = &K;
  P.cfg = &cfg;
  P.opt = opt;
  P.n_lines = lines.size();
  P.n_poses = n_poses;
  for (std::size_t j = 0; j < lines.size(); ++j)
    for (const auto& o : lines[j].observations) {
      ObsData d;
      d.line = j;
      d.pose = o.pose_index;
      d.sqrt_w = std::sqrt(o.segment.length());
      try {
        d.plane_n = viewing_plane_cam(o.segment, K).n;
      } catch (const DegenerateError&) {
        continue;
      }
      d.p1 = o.segment.p1;
      d.p2 = o.segment.p2;
      if (opt.variant == CostVariant::kFull) {
        const std::size_t m = std::min(o.event_pixels.size(), cfg.n_events_per_line);
        // evenly spread subset when there are more events than the budget
        for (std::size_t k = 0; k < m; ++k) {
          const std::size_t idx = m == o.event_pixels.size() ? k : k * o.event_pixels.size() / m;
          d.bearings.push_back(K.unproject(o.event_pixels[idx]).normalized());
        }
      }
      P.obs.push_back(std::move(d));
    }
  return P;
}

// Residuals of one observation block. Writes into r and returns the count.
template <typename T>
int block_residuals(const Problem& P, const ObsData& d, const LineState& ls, const CameraPose& pose,
                    const T* dl, const T* dp, std::vector<T>& r) {
  using V3 = kernels::V3<T>;
  using M3 = kernels::M3<T>;
  V3 dw, mw;
  kernels::orthonormal_to_plucker<T>(ls.U, ls.phi, dl, dw, mw);
  M3 R;
  V3 t;
  kernels::perturb_pose<T>(pose.R, pose.t, dp, R, t);
  V3 dc, mc;
  kernels::line_to_camera<T>(dw, mw, R, t, dc, mc);
  r.clear();
  if (P.opt.variant == CostVariant::kReprojection) {
    const Mat3 Kinv_t = P.K->K().inverse().transpose();
    const V3 l = Kinv_t.cast<T>() * mc;
    using std::sqrt;
    const T nrm = sqrt(l.x() * l.x() + l.y() * l.y());
    for (const Vec2& p : {d.p1, d.p2}) r.push_back(T(d.sqrt_w) * (l.x() * p.x() + l.y() * p.y() + l.z()) / nrm);
    return int(r.size());
  }
  T buf[7];
  kernels::line_plane_residual_cam<T>(dc, mc, d.plane_n.cast<T>(), buf);
  for (int k = 0; k < 7; ++k) r.push_back(T(d.sqrt_w) * buf[k]);
  if (!d.bearings.empty()) {
    const V3 n = kernels::line_plane_normal_cam<T>(mc);
    const T s = T(std::sqrt(P.cfg->lambda_event));
    for (const Vec3& b : d.bearings) {
      const V3 e = kernels::event_r1<T>(n, b);
      r.push_back(s * e.x());
      r.push_back(s * e.y());
      r.push_back(s * e.z());
    }
  }
  return int(r.size());
}

struct Linearization {
  double cost = 0.0;
  Eigen::MatrixXd H;
  Eigen::VectorXd g;  ///< Jᵀ r
  std::vector<double> line_cost;
};

Linearization linearize(const Problem& P, std::span<const LineState> ls,
                        std::span<const CameraPose> poses, bool with_jacobian) {
  Linearization lin;
  const std::size_t N = P.n_params();
  if (with_jacobian) {
    lin.H = Eigen::MatrixXd::Zero(N, N);
    lin.g = Eigen::VectorXd::Zero(N);
  }
  lin.line_cost.assign(P.n_lines, 0.0);
  std::vector<J10> rj;
  std::vector<double> rd;
  const double zeros[6] = {0, 0, 0, 0, 0, 0};
  for (const ObsData& d : P.obs) {
    const LineState& L = ls[d.line];
    const CameraPose& pose = poses[d.pose];
    double c = 0.0;
    if (!with_jacobian) {
      block_residuals<double>(P, d, L, pose, zeros, zeros, rd);
      for (double v : rd) c += v * v;
    } else {
      J10 dl[4], dp[6];
      for (int k = 0; k < 4; ++k) dl[k] = J10(0.0, k);
      for (int k = 0; k < 6; ++k) dp[k] = J10(0.0, 4 + k);
      block_residuals<J10>(P, d, L, pose, dl, dp, rj);
      const int lo = P.line_offset(d.line), po = P.pose_offset(d.pose);
      // Active columns of this block: local slot -> global index.
      int slots[10], glob[10], na = 0;
      if (lo >= 0)
        for (int k = 0; k < 4; ++k) slots[na] = k, glob[na++] = lo + k;
      if (po >= 0)
        for (int k = 0; k < 6; ++k) slots[na] = 4 + k, glob[na++] = po + k;
      Eigen::Matrix<double, 10, 10> h = Eigen::Matrix<double, 10, 10>::Zero();
      Eigen::Matrix<double, 10, 1> gg = Eigen::Matrix<double, 10, 1>::Zero();
      for (const J10& v : rj) {
        c += v.a * v.a;
        h.noalias() += v.v * v.v.transpose();
        gg.noalias() += v.a * v.v;
      }
      for (int a = 0; a < na; ++a) {
        lin.g[glob[a]] += gg[slots[a]];
        for (int b = 0; b < na; ++b) lin.H(glob[a], glob[b]) += h(slots[a], slots[b]);
      }
    }
    lin.line_cost[d.line] += c;
    lin.cost += c;
  }
  return lin;
}

void apply(std::vector<LineState>& ls, std::vector<CameraPose>& poses, const Problem& P,
           const Eigen::VectorXd& step) {
  for (std::size_t j = 0; j < ls.size(); ++j) {
    const int o = P.line_offset(j);
    if (o < 0) continue;
    ls[j].U = ls[j].U * so3_exp(step.segment<3>(o));
    ls[j].phi += step[o + 3];
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const int o = P.pose_offset(i);
    if (o < 0) continue;
    poses[i].R = poses[i].R * so3_exp(step.segment<3>(o));
    poses[i].t += step.segment<3>(o + 3);
  }
}

Line3D to_line(const LineState& s, const Line3D& previous) {
  const Vec3 d = s.U.col(0);
  Line3D L;
  L.d = d.normalized();
  L.m = std::tan(s.phi) * s.U.col(1);
  L.m -= L.d.dot(L.m) * L.d;
  if (previous.endpoints)
    L.endpoints = std::make_pair(L.closest_point(previous.endpoints->first),
                                 L.closest_point(previous.endpoints->second));
  return L;
}

}  // namespace

CostGradient evaluate_cost(std::span<const MapLine> lines, std::span<const CameraPose> poses,
                           const Intrinsics& K, const ReconConfig& cfg, const OptimizeOptions& opt) {
  const Problem P = make_problem(lines, poses.size(), K, cfg, opt);
  std::vector<LineState> ls;
  for (const auto& l : lines) ls.push_back(line_state(l.line));
  const Linearization lin = linearize(P, ls, poses, true);
  return {lin.cost, 2.0 * lin.g};
}

void apply_step(std::vector<MapLine>& lines, std::vector<CameraPose>& poses,
                const Eigen::VectorXd& step, const OptimizeOptions& opt) {
  Problem P;
  P.opt = opt;
  P.n_lines = lines.size();
  P.n_poses = poses.size();
  if (std::size_t(step.size()) != P.n_params()) throw std::invalid_argument("apply_step: size mismatch");
  std::vector<LineState> ls;
  for (const auto& l : lines) ls.push_back(line_state(l.line));
  apply(ls, poses, P, step);
  for (std::size_t j = 0; j < lines.size(); ++j) lines[j].line = to_line(ls[j], lines[j].line);
}

OptimizeReport optimize(std::vector<MapLine>& lines, std::vector<CameraPose>& poses,
                        const Intrinsics& K, const ReconConfig& cfg, const OptimizeOptions& opt) {
  OptimizeReport rep;
  const Problem P = make_problem(lines, poses.size(), K, cfg, opt);
  std::vector<LineState> ls;
  for (const auto& l : lines) ls.push_back(line_state(l.line));
  const std::size_t N = P.n_params();

  Linearization lin = linearize(P, ls, poses, true);
  lin.cost = linearize(P, ls, poses, false).cost;
  const std::vector<double> initial_line_cost = lin.line_cost;
  rep.initial_cost = lin.cost;
  rep.cost_history.push_back(lin.cost);
  // Scale gauge: the farthest pose may not move along its baseline.
  int gauge = -1;
  Vec3 gauge_dir = Vec3::Zero();
  if (opt.fix_scale && opt.refine_poses && poses.size() > 1) {
    std::size_t far = 1;
    for (std::size_t i = 2; i < poses.size(); ++i)
      if ((poses[i].t - poses[0].t).norm() > (poses[far].t - poses[0].t).norm()) far = i;
    if ((poses[far].t - poses[0].t).norm() > 1e-12) {
      gauge = P.pose_offset(far) + 3;
      gauge_dir = (poses[far].t - poses[0].t).normalized();
    }
  }
  const Mat3 Q = Mat3::Identity() - gauge_dir * gauge_dir.transpose();

  double mu = 1e-4;
  for (int it = 0; it < opt.max_iterations && N > 0 && std::isfinite(lin.cost); ++it) {
    if (lin.cost < 1e-20 || lin.g.lpNorm<Eigen::Infinity>() < 1e-15) break;
    bool accepted = false;
    while (!accepted && mu < 1e12) {
      Eigen::MatrixXd A = lin.H;
      for (std::size_t k = 0; k < N; ++k) A(k, k) += mu * std::max(lin.H(k, k), 1e-9);
      Eigen::VectorXd rhs = -lin.g;
      if (gauge >= 0) {
        A.middleRows(gauge, 3) = Q * A.middleRows(gauge, 3);
        A.middleCols(gauge, 3) = A.middleCols(gauge, 3) * Q;
        A.block(gauge, gauge, 3, 3) += gauge_dir * gauge_dir.transpose();
        rhs.segment<3>(gauge) = Q * rhs.segment<3>(gauge);
      }
      const Eigen::VectorXd step = A.ldlt().solve(rhs);
      if (!step.allFinite()) {
        mu *= 4;
        continue;
      }
      auto ls_try = ls;
      auto poses_try = poses;
      apply(ls_try, poses_try, P, step);
      const double c_try = linearize(P, ls_try, poses_try, false).cost;
      if (std::isfinite(c_try) && c_try < lin.cost) {
        const double prev = lin.cost;
        ls = std::move(ls_try);
        poses = std::move(poses_try);
        lin = linearize(P, ls, poses, true);
        lin.cost = c_try;  // the Jet path rounds differently
        rep.cost_history.push_back(lin.cost);
        mu = std::max(mu / 3, 1e-12);
        accepted = true;
        ++rep.iterations;
        if (prev - lin.cost <= 1e-12 * prev) it = opt.max_iterations;
      } else {
        mu *= 4;
      }
    }
    if (!accepted) break;
  }
  rep.final_cost = lin.cost;

  std::vector<MapLine> kept;
  for (std::size_t j = 0; j < lines.size(); ++j) {
    const double c = lin.line_cost[j];
    const bool diverged =
        !std::isfinite(c) || (c > cfg.divergence_factor * initial_line_cost[j] && c > 1e-12);
    if (diverged) {
      rep.discarded.push_back(j);
      continue;
    }
    MapLine m = std::move(lines[j]);
    m.line = to_line(ls[j], m.line);
    kept.push_back(std::move(m));
  }
  lines = std::move(kept);
  return rep;
}

Line3D refine_triangulation(const Line3D& init, std::span<const LineObservation> views,
                            std::span<const CameraPose> poses, const Intrinsics& K,
                            int max_iterations) {
  // Unit weights and no events: the summed triangulation cost.
  std::vector<MapLine> one(1);
  one[0].line = init;
  for (auto v : views) {
    v.event_pixels.clear();
    const double len = v.segment.length();
    if (len <= 0) continue;
    // scale the segment about its midpoint to unit length so that w = 1
    const Vec2 mid = v.segment.midpoint(), dir = v.segment.direction();
    v.segment.p1 = mid - 0.5 * dir;
    v.segment.p2 = mid + 0.5 * dir;
    one[0].observations.push_back(std::move(v));
  }
  std::vector<CameraPose> ps(poses.begin(), poses.end());
  ReconConfig cfg;
  cfg.divergence_factor = std::numeric_limits<double>::infinity();
  OptimizeOptions opt;
  opt.variant = CostVariant::kLineOnly;
  opt.max_iterations = max_iterations;
  optimize(one, ps, K, cfg, opt);
  Line3D out = one.empty() ? init : one[0].line;
  out.endpoints.reset();
  return out;
}

}  // namespace evline
