#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evline/detect.hpp"
#include "evline/events.hpp"
#include "evline/matching.hpp"
#include "evline/planefit.hpp"
#include "evline/recon.hpp"

namespace evline {

struct FrontendConfig {
  TimeUs frame_interval_us = 50'000;
  /// Window sizes as fractions of the mean per-frame event count.
  std::vector<double> window_fractions = {1.0, 0.2};
  bool binary = true;
  bool timestamp = true;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  /// Worker threads; 0 uses every available core. Results do not depend on it.
  int workers = 0;
  FrontendConfig frontend;
  MwmrConfig mwmr;
  /// Off: raw detections go straight to matching and no events are associated.
  bool use_planefit = true;
  PlaneFitConfig planefit;
  MatchConfig match;
  ReconConfig recon;
  bool optimize = true;
  CostVariant cost = CostVariant::kFull;
  bool refine_poses = false;
  /// Pins the trajectory scale while refining poses.
  bool fix_scale = true;
};

/// Canonical `key = value` text with one section per stage.
std::string config_to_text(const PipelineConfig& cfg);
/// Unknown keys and malformed values throw ParseError; missing keys keep
/// their defaults.
PipelineConfig config_from_text(std::string_view text);
PipelineConfig load_config(const std::string& path);
void save_config(const std::string& path, const PipelineConfig& cfg);

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct PipelineResult {
  std::vector<Line3D> lines;  ///< trimmed, in track order
  /// Inlier observations of each line (pose_index into frame_poses).
  std::vector<std::vector<LineObservation>> observations;
  /// Per-frame observation times and camera poses (refined when requested).
  std::vector<CameraPose> frame_poses;
  std::vector<StageTiming> timings;
  std::vector<std::string> diagnostics;
  std::size_t n_frames = 0;
  std::size_t n_detections = 0;
  std::size_t n_refined = 0;
  std::size_t n_tracks = 0;
  std::size_t n_triangulated = 0;
  std::size_t n_deduplicated = 0;
  std::size_t n_discarded = 0;
  OptimizeReport optimization;
};

/// Frame poses come from interpolating `trajectory` at each frame center.
PipelineResult run_pipeline(const EventStream& stream, std::span<const CameraPose> trajectory,
                            const Intrinsics& K, const PipelineConfig& cfg);

/// Writes `stage,ms` rows.
void save_timings_csv(const std::string& path, std::span<const StageTiming> timings);

}  // namespace evline
