// Command-line driver: dataset generation, reconstruction, evaluation and
// ablation tables.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "evline/eval.hpp"
#include "evline/io.hpp"
#include "evline/pipeline.hpp"
#include "evline/synth.hpp"

namespace fs = std::filesystem;
using namespace evline;

namespace {

// Error tagged with the stage that raised it.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string s, const std::string& what) : std::runtime_error(what), stage(std::move(s)) {}
};

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

using Manifest = std::map<std::string, std::string>;

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : m) out << k << " = " << v << '\n';
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + path.string());
  return read_key_values(path.string());
}

const std::string& need(const Manifest& m, const std::string& key, const fs::path& where) {
  auto it = m.find(key);
  if (it == m.end()) throw std::runtime_error(where.string() + ": missing key `" + key + "`");
  return it->second;
}

fs::path require_file(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw std::runtime_error("dataset is incomplete: missing " + p.string());
  return p;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_double(trim(item)));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scene = "cube";
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::string out;
  double radius = 0, height = 0, arc_deg = 0, bob = -1;
  long long duration_us = 0;
  double edge_spacing = 0;
};

void cmd_simulate(const SimulateArgs& a) {
  const WireScene scene = stage("simulate", [&] { return scene_preset(a.scene); });
  const Intrinsics K = preset_intrinsics(a.scene);
  OrbitSpec orbit = preset_orbit(a.scene);
  if (a.radius > 0) orbit.radius = a.radius;
  if (a.height != 0) orbit.height = a.height;
  if (a.arc_deg > 0) orbit.arc_deg = a.arc_deg;
  if (a.bob >= 0) orbit.bob = a.bob;
  if (a.duration_us > 0) orbit.duration_us = a.duration_us;

  SimOptions so;
  so.noise_frac = a.noise;
  so.seed = a.seed;
  const auto traj = orbit_trajectory(orbit);
  const auto sim = stage("simulate", [&] { return generate_events(scene, traj, K, so); });
  const double spacing = a.edge_spacing > 0 ? a.edge_spacing : scene.diameter() / 2000.0;

  stage("write", [&] {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    save_events((dir / "events.txt").string(), sim.stream);
    save_poses((dir / "poses.txt").string(), traj.keyposes);
    save_intrinsics((dir / "intrinsics.cfg").string(), K);
    save_segments_csv((dir / "gt_lines.csv").string(), scene.segments);
    write_point_ply((dir / "gt_edges.ply").string(), ground_truth_edge_points(scene, spacing));
    write_manifest(dir / "manifest.txt",
                   {{"scene", scene.name},
                    {"seed", std::to_string(a.seed)},
                    {"noise_frac", fmt_double(a.noise)},
                    {"clean_events", std::to_string(sim.clean_count)},
                    {"noise_events", std::to_string(sim.noise_count)},
                    {"n_segments", std::to_string(scene.segments.size())},
                    {"diameter", fmt_double(scene.diameter())},
                    {"edge_spacing", fmt_double(spacing)}});
    return 0;
  });
  std::printf("%s: %zu events (%zu noise), %zu poses, %zu GT segments -> %s\n", scene.name.c_str(),
              sim.stream.events.size(), sim.noise_count, traj.keyposes.size(), scene.segments.size(),
              a.out.c_str());
}

// ---------------------------------------------------------------------------

struct Dataset {
  Manifest manifest;
  Intrinsics K;
  EventStream events;
  std::vector<CameraPose> poses;
};

Dataset load_dataset(const fs::path& dir) {
  return stage("load", [&] {
    Dataset d;
    d.manifest = read_manifest(require_file(dir, "manifest.txt"));
    d.K = load_intrinsics(require_file(dir, "intrinsics.cfg").string());
    d.events = load_events(require_file(dir, "events.txt").string(), d.K.width, d.K.height);
    d.poses = load_poses(require_file(dir, "poses.txt").string());
    return d;
  });
}

void apply_ablation(PipelineConfig& c, const std::string& what) {
  if (what.empty() || what == "none") return;
  if (what == "no-planefit") c.use_planefit = false;
  else if (what == "limap-cost") c.cost = CostVariant::kReprojection;
  else if (what == "line-only") c.cost = CostVariant::kLineOnly;
  else if (what == "no-opt") c.optimize = false;
  else throw std::invalid_argument("unknown ablation `" + what + "`");
}

struct ReconstructArgs {
  std::string data, out, config, ablate;
  bool refine_poses = false;
  int workers = -1;
  long long seed = -1;
};

PipelineConfig make_config(const ReconstructArgs& a) {
  return stage("config", [&] {
    PipelineConfig c = a.config.empty() ? PipelineConfig{} : load_config(a.config);
    apply_ablation(c, a.ablate);
    if (a.refine_poses) c.refine_poses = true;
    if (a.workers >= 0) c.workers = a.workers;
    if (a.seed >= 0) c.seed = std::uint64_t(a.seed);
    return c;
  });
}

void cmd_reconstruct(const ReconstructArgs& a) {
  const Dataset d = load_dataset(a.data);
  const PipelineConfig cfg = make_config(a);
  const auto res = stage("reconstruct", [&] { return run_pipeline(d.events, d.poses, d.K, cfg); });
  for (const auto& msg : res.diagnostics) std::fprintf(stderr, "[reconstruct] %s\n", msg.c_str());

  stage("write", [&] {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    save_lines_csv((dir / "lines.csv").string(), res.lines);
    save_lines_ply((dir / "lines.ply").string(), res.lines);
    save_timings_csv((dir / "timings.csv").string(), res.timings);
    save_config((dir / "config.cfg").string(), cfg);
    if (cfg.refine_poses) save_poses((dir / "poses_refined.txt").string(), res.frame_poses);
    write_manifest(dir / "manifest.txt", {{"scene", need(d.manifest, "scene", a.data)},
                                          {"ablation", a.ablate.empty() ? "none" : a.ablate},
                                          {"n_lines", std::to_string(res.lines.size())},
                                          {"n_frames", std::to_string(res.n_frames)},
                                          {"n_tracks", std::to_string(res.n_tracks)}});
    return 0;
  });
  double total = 0;
  for (const auto& t : res.timings) total += t.ms;
  std::printf("%zu frames, %zu detections, %zu tracks, %zu lines in %.0f ms -> %s\n", res.n_frames,
              res.n_detections, res.n_tracks, res.lines.size(), total, a.out.c_str());
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string map, gt, out, thresholds;
  double spacing = 0;
  bool csv = false;
};

struct LoadedMap {
  std::vector<Line3D> lines;
  std::string scene;  // empty when the map carries no manifest
};

LoadedMap load_map(const fs::path& p) {
  LoadedMap m;
  fs::path file = p;
  if (fs::is_directory(p)) {
    file = p / "lines.csv";
    if (fs::exists(p / "manifest.txt")) m.scene = need(read_manifest(p / "manifest.txt"), "scene", p);
  }
  if (!fs::exists(file)) throw std::runtime_error("missing " + file.string());
  m.lines = load_lines_csv(file.string());
  return m;
}

MetricReport evaluate_against(std::span<const Line3D> lines, const fs::path& gt_dir, double spacing,
                              std::span<const double> thresholds) {
  if (lines.empty())
    throw std::runtime_error(
        "the map has no lines; check the reconstruct diagnostics (empty stream, all tracks "
        "rejected) or relax [matching] min_track_len / [recon] min_inliers");
  const auto gt = read_point_ply(require_file(gt_dir, "gt_edges.ply").string());
  return evaluate_map(lines, gt, spacing, thresholds);
}

void cmd_evaluate(const EvaluateArgs& a) {
  const auto gt_manifest = stage("load", [&] { return read_manifest(require_file(a.gt, "manifest.txt")); });
  const auto map = stage("load", [&] { return load_map(a.map); });
  const std::string gt_scene = need(gt_manifest, "scene", a.gt);
  if (!map.scene.empty() && map.scene != gt_scene)
    throw StageError("evaluate", "scene mismatch: map is `" + map.scene + "`, ground truth is `" + gt_scene + "`");
  const std::vector<double> thresholds =
      a.thresholds.empty() ? kIouThresholds : stage("evaluate", [&] { return parse_list(a.thresholds); });
  const double spacing =
      a.spacing > 0 ? a.spacing : parse_double(need(gt_manifest, "edge_spacing", a.gt));
  const auto rep = stage("evaluate", [&] { return evaluate_against(map.lines, a.gt, spacing, thresholds); });
  const std::string text = a.csv ? report_csv(rep) : report_text(rep);
  std::fputs(text.c_str(), stdout);
  if (!a.out.empty()) stage("write", [&] {
      std::ofstream out(a.out);
      if (!out) throw std::runtime_error("cannot write " + a.out);
      out << text;
      return 0;
    });
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string data, out, config;
  int workers = -1;
};

void cmd_ablate_report(const AblateArgs& a) {
  const Dataset d = load_dataset(a.data);
  const auto segments = stage("load", [&] { return load_segments_csv(require_file(a.data, "gt_lines.csv").string()); });
  const double diameter = parse_double(need(d.manifest, "diameter", a.data));
  const double spacing = parse_double(need(d.manifest, "edge_spacing", a.data));
  const auto gt = stage("load", [&] { return read_point_ply(require_file(a.data, "gt_edges.ply").string()); });

  std::ostringstream csv;
  csv << "variant,n_lines,recovery,accuracy,completion";
  for (double t : kIouThresholds) csv << ",iou@" << fmt_double(t);
  csv << ",seconds\n";
  std::printf("%-12s %7s %9s %9s %11s", "variant", "lines", "recovery", "accuracy", "completion");
  for (double t : kIouThresholds) std::printf("  iou@%-6s", fmt_double(t).c_str());
  std::printf(" %8s\n", "seconds");

  for (const std::string variant : {"no-planefit", "no-opt", "limap-cost", "line-only", "full"}) {
    ReconstructArgs ra;
    ra.config = a.config;
    ra.workers = a.workers;
    ra.ablate = variant == "full" ? "" : variant;
    const PipelineConfig cfg = make_config(ra);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = stage("reconstruct", [&] { return run_pipeline(d.events, d.poses, d.K, cfg); });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto rec = segment_recovery(res.lines, segments, 0.01 * diameter);
    MetricReport m;
    if (!res.lines.empty()) m = evaluate_map(res.lines, gt, spacing);
    else m.iou.assign(kIouThresholds.size(), 0.0);
    csv << variant << ',' << res.lines.size() << ',' << fmt_double(rec.rate) << ',' << fmt_double(m.accuracy)
        << ',' << fmt_double(m.completion);
    for (double v : m.iou) csv << ',' << fmt_double(v);
    csv << ',' << fmt_double(secs) << '\n';
    std::printf("%-12s %7zu %9.3f %9.4f %11.4f", variant.c_str(), res.lines.size(), rec.rate, m.accuracy,
                m.completion);
    for (double v : m.iou) std::printf("  %10.4f", v);
    std::printf(" %8.1f\n", secs);
  }
  if (!a.out.empty()) stage("write", [&] {
      std::ofstream out(a.out);
      if (!out) throw std::runtime_error("cannot write " + a.out);
      out << csv.str();
      return 0;
    });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera 3D line mapping"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic event dataset");
  sim->add_option("--scene", sa.scene, "Scene preset")->check(CLI::IsMember({"cube", "cube-grid", "room"}))
      ->capture_default_str();
  sim->add_option("--noise", sa.noise, "Noise events as a fraction of clean events")->check(CLI::Range(0.0, 10.0))
      ->capture_default_str();
  sim->add_option("--seed", sa.seed, "Noise seed")->capture_default_str();
  sim->add_option("--radius", sa.radius, "Orbit radius (default: preset)");
  sim->add_option("--height", sa.height, "Orbit height (default: preset)");
  sim->add_option("--arc-deg", sa.arc_deg, "Orbit sweep in degrees (default: preset)");
  sim->add_option("--bob", sa.bob, "Vertical bob amplitude (default: preset)");
  sim->add_option("--duration-us", sa.duration_us, "Trajectory duration (default: preset)");
  sim->add_option("--edge-spacing", sa.edge_spacing, "GT edge point spacing (default: diameter / 2000)");
  sim->add_option("--out", sa.out, "Output dataset directory")->required();

  ReconstructArgs ra;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a 3D line map from a dataset");
  rec->add_option("--data", ra.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  rec->add_option("--out", ra.out, "Output directory")->required();
  rec->add_option("--config", ra.config, "Config file (see --dump-config)")->check(CLI::ExistingFile);
  rec->add_option("--ablate", ra.ablate, "Ablation")
      ->check(CLI::IsMember({"none", "no-planefit", "limap-cost", "line-only", "no-opt"}));
  rec->add_flag("--refine-poses", ra.refine_poses, "Refine camera poses jointly with the lines");
  rec->add_option("--workers", ra.workers, "Worker threads (0: all cores)");
  rec->add_option("--seed", ra.seed, "Override the config seed");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a line map against ground truth");
  ev->add_option("--map", ea.map, "Reconstruction directory or lines.csv")->required();
  ev->add_option("--gt", ea.gt, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--thresholds", ea.thresholds, "Comma-separated IoU thresholds (default 0.005,0.01,0.02)");
  ev->add_option("--spacing", ea.spacing, "Map sampling spacing (default: dataset edge spacing)");
  ev->add_option("--out", ea.out, "Also write the report here");
  ev->add_flag("--csv", ea.csv, "CSV instead of key: value text");

  AblateArgs aa;
  auto* abl = app.add_subcommand("ablate-report", "Run every ablation on a dataset and tabulate the metrics");
  abl->add_option("--data", aa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--config", aa.config, "Base config file")->check(CLI::ExistingFile);
  abl->add_option("--workers", aa.workers, "Worker threads (0: all cores)");
  abl->add_option("--out", aa.out, "CSV output");

  bool dump = false;
  auto* dc = app.add_subcommand("dump-config", "Print the default config");
  dc->callback([&] { dump = true; });

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) cmd_simulate(sa);
    else if (*rec) cmd_reconstruct(ra);
    else if (*ev) cmd_evaluate(ea);
    else if (*abl) cmd_ablate_report(aa);
    else if (dump) std::fputs(config_to_text(PipelineConfig{}).c_str(), stdout);
  } catch (const StageError& e) {
    std::fprintf(stderr, "[%s] error: %s\n", e.stage.c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[main] error: %s\n", e.what());
    return 1;
  }
  return 0;
}
