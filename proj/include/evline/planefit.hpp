#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evline/events.hpp"
#include "evline/lines2d.hpp"

namespace evline {

struct PlaneFitConfig {
  /// Events within this distance of a detected segment are candidates (px).
  double candidate_radius = 10.0;
  /// Strict point-to-plane inlier threshold in scaled space-time units.
  double tau = 2.0;
  /// t' = (t - t_obs) in milliseconds multiplied by time_scale.
  double time_scale = 20.0;
  int iterations = 200;
  std::size_t min_support = 10;
  /// Associated events kept per line, nearest in time to t_obs.
  std::size_t n_assoc = 100;
  /// Refined segments shorter than this are dropped (px).
  double min_length = 15.0;
};

/// Plane a x + b y + c t' + d = 0 in scaled space-time, (a, b, c) unit.
/// t' is measured from t_ref.
struct SpaceTimePlane {
  Vec4 coeffs = Vec4::Zero();
  TimeUs t_ref = 0;
  double time_scale = 20.0;
  std::vector<std::size_t> inliers;
  double rms_residual = 0.0;

  double scaled_time(TimeUs t) const;
  /// Unsigned point-to-plane distance of an event.
  double distance(const Event& e) const;
  double distance(const Vec3& xyt) const;
};

/// Events whose pixel lies within `radius` of the closed segment.
std::vector<Event> candidate_events(const LineSegment2D& line, std::span<const Event> events,
                                    double radius);

/// RANSAC over minimal 3-point samples in (x, y, t') space with the inlier
/// test d < tau, followed by a total-least-squares refit on the inliers and a
/// final inlier pass. Returns nothing when there are fewer than 3 points or
/// fewer than min_support final inliers. Deterministic for a given seed.
std::optional<SpaceTimePlane> fit_plane_ransac_points(std::span<const Vec3> points, double tau,
                                                      int iterations, std::size_t min_support,
                                                      std::uint64_t seed);

/// fit_plane_ransac_points on events mapped to (x, y, t'), t' relative to t_ref.
/// Inlier indices refer to `candidates`.
std::optional<SpaceTimePlane> fit_plane_ransac(std::span<const Event> candidates, TimeUs t_ref,
                                               const PlaneFitConfig& cfg, std::uint64_t seed);

/// Intersection of the plane with t = t_obs; the endpoints of `original`
/// are projected onto it. Throws DegenerateError when a = b = 0.
LineSegment2D slice_plane(const SpaceTimePlane& plane, TimeUs t_obs, const LineSegment2D& original);

/// Event pixel carried along the plane's motion to time t_obs.
Vec2 transport_to(const SpaceTimePlane& plane, const Event& e, TimeUs t_obs);

struct AssociatedLine {
  LineSegment2D refined;
  LineSegment2D original;
  SpaceTimePlane plane;
  std::vector<Event> assoc_events;
};

/// Inliers d < tau of `plane` among the candidates, keeping the n_assoc
/// nearest in |t - t_obs| (time order preserved). Nothing when no inliers.
std::optional<std::vector<Event>> associate(const SpaceTimePlane& plane,
                                            std::span<const Event> candidates, double tau,
                                            std::size_t n_assoc, TimeUs t_obs);

/// Seed of the RANSAC for line `index` of frame `frame_id`.
std::uint64_t line_seed(std::uint64_t base, int frame_id, std::size_t index);

/// Candidate selection, plane fit, slicing and association for every line
/// of one frame. Lines whose fit fails or whose refined segment is shorter
/// than min_length are dropped.
std::vector<AssociatedLine> refine_lines(std::span<const LineSegment2D> lines,
                                         std::span<const Event> window, const PlaneFitConfig& cfg,
                                         std::uint64_t seed_base = 0);

/// Debug dump: CSV `frame_id,a,b,c,d,inliers,rms`.
void save_planes_csv(const std::string& path, std::span<const AssociatedLine> lines);

}  // namespace evline
