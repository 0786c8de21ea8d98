#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evline/camera.hpp"
#include "evline/geom.hpp"
#include "evline/lines2d.hpp"

namespace evline {

struct ReconConfig {
  /// Per-view Grassmann cost threshold for RANSAC inliers.
  double graff_thresh = 1.4;
  std::size_t min_inliers = 10;
  double lambda_event = 1e4;
  std::size_t n_events_per_line = 50;
  /// Auxiliary inlier tests.
  double max_angle_3d_deg = 10.0;
  double max_angle_2d_deg = 5.0;
  double max_perp_px = 2.0;
  double max_persp_px = 2.0;
  /// Viewing planes closer than this to parallel do not triangulate.
  double min_plane_angle_deg = 1.0;
  /// Tracks up to this length try every view pair, longer ones random_pairs.
  std::size_t exhaustive_max_views = 15;
  int random_pairs = 100;
  /// DBSCAN over (direction, center / scene diameter, disparity).
  double dbscan_eps = 0.05;
  std::size_t dbscan_min_pts = 1;
  int max_iterations = 50;
  /// A line whose own cost grows past this factor of its initial cost is discarded.
  double divergence_factor = 10.0;
  /// Endpoint clustering bandwidth as a fraction of the candidate spread.
  double trim_bandwidth = 0.02;
};

/// One 2D observation of a 3D line. Event pixels are already carried to
/// the observation time.
struct LineObservation {
  std::size_t pose_index = 0;
  LineSegment2D segment;
  std::vector<Vec2> event_pixels;
};

struct LineHypothesis {
  Line3D line;
  std::size_t p = 0, q = 0;          ///< source views
  std::vector<std::size_t> inliers;  ///< indices into the observation list
  double score = 0.0;                ///< summed Grassmann cost over inliers
};

/// Reconstructed line with the observations that support it.
struct MapLine {
  Line3D line;
  std::vector<LineObservation> observations;
  int track_id = -1;
};

/// Intersection of the two back-projected viewing planes. Throws
/// DegenerateError when the planes are within min_angle_deg of parallel.
Line3D triangulate_pair(const LineSegment2D& lp, const CameraPose& pose_p, const LineSegment2D& lq,
                        const CameraPose& pose_q, const Intrinsics& K, double min_angle_deg = 1.0);

/// Grassmann cost of a line against the viewing plane of a segment, with
/// the camera center as the reference point.
double view_cost(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                 const Intrinsics& K);

/// The four auxiliary distances of a line against one observation.
struct AuxDistances {
  double angle_3d_deg = 0.0;
  double angle_2d_deg = 0.0;
  double perp_px = 0.0;
  double persp_px = 0.0;
};
/// Throws DegenerateError when the line passes through the camera center.
AuxDistances aux_distances(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                           const Intrinsics& K);
bool is_inlier_view(const Line3D& line, const LineSegment2D& seg, const CameraPose& pose,
                    const Intrinsics& K, const ReconConfig& cfg);

/// RANSAC over view pairs, then minimization of the summed Grassmann cost
/// over the inliers starting from the best hypothesis. Nothing when every
/// pair is degenerate or the inliers are fewer than min_inliers.
std::optional<LineHypothesis> ransac_triangulate(std::span<const LineObservation> views,
                                                 std::span<const CameraPose> poses,
                                                 const Intrinsics& K, const ReconConfig& cfg,
                                                 std::uint64_t seed);

/// Minimizes the summed Grassmann cost over the given views.
Line3D refine_triangulation(const Line3D& init, std::span<const LineObservation> views,
                            std::span<const CameraPose> poses, const Intrinsics& K,
                            int max_iterations = 50);

/// Endpoints from the back-projected perpendiculars at every observed 2D
/// endpoint, clustered along the line. Nothing when no candidate exists.
std::optional<Line3D> trim_endpoints(const Line3D& line, std::span<const LineObservation> views,
                                     std::span<const CameraPose> poses, const Intrinsics& K,
                                     double bandwidth = 0.02);

/// DBSCAN duplicate removal; the longest line of every cluster survives.
/// Lines must carry endpoints. Output keeps input order.
std::vector<MapLine> dedup_lines(std::vector<MapLine> lines, const Vec3& trajectory_centroid,
                                 double scene_diameter, const ReconConfig& cfg);

// ---------------------------------------------------------------------------
// Joint optimization
// ---------------------------------------------------------------------------

enum class CostVariant {
  kFull,          ///< line and event Grassmann terms
  kLineOnly,      ///< line Grassmann term
  kReprojection,  ///< 2D endpoint-to-projected-line distances (ablation baseline)
};

/// "full", "line-only", "reprojection".
const char* to_string(CostVariant v);
CostVariant cost_variant_from_string(std::string_view s);

struct OptimizeOptions {
  CostVariant variant = CostVariant::kFull;
  bool refine_poses = false;
  bool refine_lines = true;
  /// With refine_poses, also pins the distance from the first pose to the
  /// farthest one, removing the scale gauge.
  bool fix_scale = false;
  int max_iterations = 50;
};

struct OptimizeReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  ///< after each accepted step, starting with the initial cost
  std::vector<std::size_t> discarded;  ///< input indices of dropped lines
};

/// Total cost and its gradient. Parameters are ordered as 4 per line (when
/// refined) then 6 per pose except pose 0 (when refined); line steps are
/// (U Exp(w), phi + dphi), pose steps (R Exp(w), t + dt).
struct CostGradient {
  double cost = 0.0;
  Eigen::VectorXd gradient;
};
CostGradient evaluate_cost(std::span<const MapLine> lines, std::span<const CameraPose> poses,
                           const Intrinsics& K, const ReconConfig& cfg, const OptimizeOptions& opt);

/// Applies a parameter step in the layout of evaluate_cost.
void apply_step(std::vector<MapLine>& lines, std::vector<CameraPose>& poses,
                const Eigen::VectorXd& step, const OptimizeOptions& opt);

/// Levenberg-Marquardt on the selected cost. Lines that end non-finite or
/// above divergence_factor times their initial cost are removed from
/// `lines` and listed in the report.
OptimizeReport optimize(std::vector<MapLine>& lines, std::vector<CameraPose>& poses,
                        const Intrinsics& K, const ReconConfig& cfg, const OptimizeOptions& opt);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// CSV `line_id,x1,y1,z1,x2,y2,z2`; lines without endpoints are skipped.
void save_lines_csv(const std::string& path, std::span<const Line3D> lines);
std::vector<Line3D> load_lines_csv(const std::string& path);
/// ASCII PLY with a vertex pair and one edge per line.
void save_lines_ply(const std::string& path, std::span<const Line3D> lines);

}  // namespace evline
