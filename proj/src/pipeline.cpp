#include "evline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "evline/io.hpp"

namespace evline {

namespace {

// Runs body(i) for i in [0, n) on `workers` threads. Each index writes only
// its own output slot, so results never depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body body) {
  std::size_t w = workers > 0 ? std::size_t(workers)
                              : std::max(1u, std::thread::hardware_concurrency());
  w = std::min(w, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<StageTiming>& out) : out_(out) {}
  void lap(std::string stage) {
    const auto now = std::chrono::steady_clock::now();
    out_.push_back({std::move(stage), std::chrono::duration<double, std::milli>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageTiming>& out_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<LineObservation> observations_of(const LineTrack& track) {
  std::vector<LineObservation> obs;
  obs.reserve(track.size());
  for (const auto& o : track.observations) {
    LineObservation lo;
    lo.pose_index = o.frame_index;
    lo.segment = o.line.refined;
    const TimeUs t_obs = o.line.refined.t_obs;
    for (const auto& e : o.line.assoc_events) lo.event_pixels.push_back(transport_to(o.line.plane, e, t_obs));
    obs.push_back(std::move(lo));
  }
  return obs;
}

double endpoint_diameter(std::span<const MapLine> lines) {
  if (lines.empty()) return 0.0;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& l : lines)
    for (const Vec3& p : {l.line.endpoints->first, l.line.endpoints->second}) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  return (hi - lo).norm();
}

}  // namespace

PipelineResult run_pipeline(const EventStream& stream, std::span<const CameraPose> trajectory,
                            const Intrinsics& K, const PipelineConfig& cfg) {
  PipelineResult res;
  Stopwatch clock(res.timings);
  if (stream.events.empty()) {
    res.diagnostics.push_back("event stream is empty; nothing to reconstruct");
    return res;
  }
  if (trajectory.empty()) throw std::invalid_argument("run_pipeline: empty trajectory");
  const TimeUs I = cfg.frontend.frame_interval_us;
  if (I <= 0) throw std::invalid_argument("run_pipeline: frame interval must be positive");

  // Front end: detection and plane fitting per frame.
  const std::size_t n_frames = frame_count(stream, I);
  const auto windows = window_counts(stream, I, cfg.frontend.window_fractions);
  std::vector<Representation> reps;
  if (cfg.frontend.binary) reps.push_back(Representation::kBinary);
  if (cfg.frontend.timestamp) reps.push_back(Representation::kTimestamp);
  if (reps.empty()) throw std::invalid_argument("run_pipeline: no frame representation enabled");

  std::vector<FrameLines> frames(n_frames);
  std::vector<std::size_t> n_det(n_frames, 0);
  const TimeUs t0 = stream.events.front().t;
  parallel_for(n_frames, cfg.workers, [&](std::size_t k) {
    const TimeUs tc = t0 + TimeUs(k) * I + I / 2;
    FrameLines& fl = frames[k];
    fl.frame_id = int(k);
    fl.t_obs = tc;
    fl.pose = interpolate_pose(trajectory, tc);
    const auto dets = mwmr_detect(build_frame(stream, int(k), tc, windows, reps), cfg.mwmr);
    n_det[k] = dets.size();
    if (cfg.use_planefit) {
      fl.lines = refine_lines(dets, slice_window(stream, tc, windows.front()), cfg.planefit, cfg.seed);
    } else {
      for (const auto& d : dets) {
        AssociatedLine a;
        a.refined = a.original = d;
        a.plane.t_ref = tc;
        fl.lines.push_back(std::move(a));
      }
    }
  });
  res.n_frames = n_frames;
  for (std::size_t k = 0; k < n_frames; ++k) {
    res.n_detections += n_det[k];
    res.n_refined += frames[k].lines.size();
  }
  clock.lap("frontend");

  const auto tracks = build_tracks(frames, K, cfg.match);
  res.n_tracks = tracks.size();
  clock.lap("matching");

  std::vector<CameraPose> poses;
  poses.reserve(n_frames);
  for (const auto& f : frames) {
    poses.push_back(f.pose);
    poses.back().stamp = f.t_obs;
  }

  // Triangulation and trimming per track.
  std::vector<std::optional<MapLine>> built(tracks.size());
  parallel_for(tracks.size(), cfg.workers, [&](std::size_t i) {
    auto obs = observations_of(tracks[i]);
    const auto hyp = ransac_triangulate(obs, poses, K, cfg.recon,
                                        cfg.seed * 0x9E3779B97F4A7C15ULL + std::uint64_t(tracks[i].track_id));
    if (!hyp) return;
    MapLine ml;
    ml.track_id = tracks[i].track_id;
    for (std::size_t j : hyp->inliers) ml.observations.push_back(std::move(obs[j]));
    auto trimmed = trim_endpoints(hyp->line, ml.observations, poses, K, cfg.recon.trim_bandwidth);
    if (!trimmed) return;
    ml.line = std::move(*trimmed);
    built[i] = std::move(ml);
  });
  std::vector<MapLine> lines;
  for (auto& b : built)
    if (b) lines.push_back(std::move(*b));
  res.n_triangulated = lines.size();
  if (lines.size() < tracks.size())
    res.diagnostics.push_back(std::to_string(tracks.size() - lines.size()) +
                              " tracks failed triangulation or trimming");
  clock.lap("triangulation");

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : poses) centroid += p.center();
  centroid /= double(poses.size());
  const double diameter = endpoint_diameter(lines);
  lines = dedup_lines(std::move(lines), centroid, diameter, cfg.recon);
  res.n_deduplicated = lines.size();
  clock.lap("dedup");

  if (cfg.optimize && !lines.empty()) {
    OptimizeOptions opt;
    opt.variant = cfg.cost;
    opt.refine_poses = cfg.refine_poses;
    opt.fix_scale = cfg.fix_scale;
    opt.max_iterations = cfg.recon.max_iterations;
    res.optimization = optimize(lines, poses, K, cfg.recon, opt);
    res.n_discarded = res.optimization.discarded.size();
    if (res.n_discarded)
      res.diagnostics.push_back(std::to_string(res.n_discarded) + " lines diverged during optimization");
    for (auto& l : lines)
      if (auto t = trim_endpoints(l.line, l.observations, poses, K, cfg.recon.trim_bandwidth))
        l.line = std::move(*t);
    clock.lap("optimization");
  }

  if (lines.empty()) res.diagnostics.push_back("no line survived reconstruction");
  for (auto& l : lines) {
    res.lines.push_back(std::move(l.line));
    res.observations.push_back(std::move(l.observations));
  }
  res.frame_poses = std::move(poses);
  return res;
}

void save_timings_csv(const std::string& path, std::span<const StageTiming> timings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "stage,ms\n";
  for (const auto& t : timings) out << t.stage << ',' << fmt_double(t.ms) << '\n';
}

}  // namespace evline
