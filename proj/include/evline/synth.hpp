#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evline/camera.hpp"
#include "evline/common.hpp"
#include "evline/events.hpp"
#include "evline/lines2d.hpp"

namespace evline {

struct Segment3D {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double length() const { return (b - a).norm(); }
};

/// Wireframe scene. Unit-less; the room preset is laid out in metres.
struct WireScene {
  std::string name;
  std::vector<Segment3D> segments;

  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  /// Bounding-box diagonal.
  double diameter() const;
};

/// Cube of the given side centred at the origin (12 edges). With
/// `grid`, each face additionally carries its two midlines, splitting it
/// into 2 x 2 cells.
WireScene cube_scene(double side = 10.0, bool grid = false);
/// 8 x 6 x 3 box room with a table, a door frame, a window frame and a shelf.
WireScene room_scene();
/// Preset by name: "cube", "cube-grid" or "room". Throws std::invalid_argument.
WireScene scene_preset(const std::string& name);

struct Trajectory {
  std::vector<CameraPose> keyposes;  ///< strictly increasing stamps

  CameraPose at(TimeUs t) const { return interpolate_pose(keyposes, t); }
  TimeUs begin() const { return keyposes.front().stamp; }
  TimeUs end() const { return keyposes.back().stamp; }
};

/// Camera on a horizontal circular arc around `target`, looking at it.
/// The arc starts at azimuth `start_deg` and sweeps `arc_deg` over
/// `duration_us`; keyposes are spaced `key_dt_us` apart.
struct OrbitSpec {
  Vec3 target = Vec3::Zero();
  Vec3 look_at = Vec3::Zero();
  double radius = 25.0;
  double height = 8.0;
  double start_deg = 0.0;
  double arc_deg = 90.0;
  /// Vertical bob bob * sin(pi * bob_halfwaves * s), s in [0, 1] along the arc.
  double bob = 0.0;
  double bob_halfwaves = 1.0;
  TimeUs duration_us = 2'000'000;
  TimeUs key_dt_us = 1'000;
};
Trajectory orbit_trajectory(const OrbitSpec& spec);

/// Camera pose looking from `center` towards `target`, world +z up.
CameraPose look_at_pose(const Vec3& center, const Vec3& target, TimeUs stamp = 0);

/// Default sensor for a preset (cube: 320x240, room: 346x260).
Intrinsics preset_intrinsics(const std::string& name);
/// Default trajectory for a preset.
OrbitSpec preset_orbit(const std::string& name);

struct SimOptions {
  TimeUs dt_us = 1'000;
  double noise_frac = 0.0;
  std::uint64_t seed = 1;
  /// Segments are clipped to camera depth > near before projection.
  double near = 0.05;
};

struct SimResult {
  EventStream stream;
  std::size_t clean_count = 0;
  std::size_t noise_count = 0;
};

/// Wireframe event simulator. At each step of dt a pixel fires when its
/// center lies in the region swept by a projected segment since the
/// previous step, unless it fired on the previous step. The event time is
/// interpolated inside the step from the pixel's position between the two
/// segment positions, and the polarity is the sign of the sweep along the
/// segment normal. Afterwards floor(noise_frac * clean) uniform noise
/// events are added and the stream is stably time-sorted.
SimResult generate_events(const WireScene& scene, const Trajectory& traj, const Intrinsics& K,
                          const SimOptions& opt);

/// Points spaced along every segment, both endpoints included; points
/// shared by several segments (corners) appear once.
std::vector<Vec3> ground_truth_edge_points(const WireScene& scene, double spacing);

/// Per-pose perturbation: Rz(ny) Ry(np) Rx(nr) applied on the camera side
/// with independent N(0, rot_std) angles, plus N(0, trans_std) on each
/// translation axis. `keep_first` leaves the first pose untouched.
std::vector<CameraPose> perturb_poses(std::span<const CameraPose> poses, double rot_std_deg,
                                      double trans_std, std::uint64_t seed,
                                      bool keep_first = false);

/// Ground-truth image segments: each scene segment clipped to depth >
/// near, projected and clipped to the image rectangle. `line_index` of the
/// result, if given, receives the source segment index.
std::vector<LineSegment2D> project_scene(const WireScene& scene, const CameraPose& pose,
                                         const Intrinsics& K, double min_length = 0.0,
                                         std::vector<std::size_t>* line_index = nullptr,
                                         double near = 0.05);

/// Poses sampled from the trajectory every `dt_us`.
std::vector<CameraPose> sample_poses(const Trajectory& traj, TimeUs dt_us);

/// Ground-truth segment CSV `line_id,x1,y1,z1,x2,y2,z2`.
void save_segments_csv(const std::string& path, std::span<const Segment3D> segments);
std::vector<Segment3D> load_segments_csv(const std::string& path);

}  // namespace evline
