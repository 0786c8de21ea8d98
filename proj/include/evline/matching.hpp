#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evline/camera.hpp"
#include "evline/planefit.hpp"

namespace evline {

struct MatchConfig {
  /// Local matching gates (px, degrees).
  double max_dist = 8.0;
  double max_angle_deg = 10.0;
  /// Global stage: representatives every `stride` frames, a pair of
  /// representatives agrees when its epipolar score reaches score_thresh,
  /// and tracks merge once min_agreeing pairs agree.
  int stride = 5;
  double score_thresh = 0.3;
  int min_agreeing = 2;
  /// Representative pairs are only formed between each frame and its
  /// `neighbors` nearest frames by camera-center distance.
  std::size_t neighbors = 20;
  /// Epipolar intersections may fall this far outside the other segment (px).
  double epipolar_tol = 2.0;
  int epipolar_samples = 20;
  /// A line triangulated from an agreeing pair must reproject onto the
  /// representatives of both groups with this quantile of the endpoint
  /// distances within consistency_px.
  double consistency_px = 3.0;
  double consistency_quantile = 0.9;
  std::size_t min_track_len = 4;
};

/// Lines of one frame after plane fitting.
struct FrameLines {
  int frame_id = 0;
  TimeUs t_obs = 0;
  CameraPose pose;
  std::vector<AssociatedLine> lines;
};

struct TrackObservation {
  int frame_id = 0;
  /// Index into the frame sequence the track was built from.
  std::size_t frame_index = 0;
  AssociatedLine line;
};

enum class TrackStatus { kActive, kClosed, kRejected };

struct LineTrack {
  int track_id = 0;
  std::vector<TrackObservation> observations;  ///< frame-unique, time-ordered
  TrackStatus status = TrackStatus::kActive;

  std::size_t size() const { return observations.size(); }
};

/// Mutual nearest neighbours under perpendicular_distance among pairs
/// within max_dist and max_angle_deg whose extents overlap along the
/// line. Each index appears at most once. Pairs are sorted by i.
std::vector<std::pair<std::size_t, std::size_t>> local_match(std::span<const LineSegment2D> prev,
                                                             std::span<const LineSegment2D> curr,
                                                             double max_dist, double max_angle_deg);

/// Fraction of points sampled on la whose epipolar line in view b meets
/// lb within its extent (tol px slack), symmetrized by the minimum over
/// both directions. Throws DegenerateError for a zero baseline.
double epipolar_score(const LineSegment2D& la, const CameraPose& pose_a, const LineSegment2D& lb,
                      const CameraPose& pose_b, const Intrinsics& K, double tol = 2.0,
                      int samples = 20);

/// Chains local matches between consecutive frames into tracks (no
/// length filter, no global stage).
std::vector<LineTrack> local_tracks(std::span<const FrameLines> frames, const MatchConfig& cfg);

/// Merges frame-disjoint tracks whose representatives agree in at least
/// min_agreeing view pairs (epipolar score plus triangulation consistency).
/// Merged tracks keep all observations.
std::vector<LineTrack> global_merge(std::vector<LineTrack> tracks, std::span<const FrameLines> frames,
                                    const Intrinsics& K, const MatchConfig& cfg);

/// local_tracks, global_merge, then drop tracks shorter than min_track_len.
/// Track ids are renumbered from 0 in order of first observation.
std::vector<LineTrack> build_tracks(std::span<const FrameLines> frames, const Intrinsics& K,
                                    const MatchConfig& cfg = {});

/// For every frame, the indices of its k nearest other frames by camera center.
std::vector<std::vector<std::size_t>> nearest_frames(std::span<const FrameLines> frames,
                                                     std::size_t k);

/// Track dump: CSV `track_id,frame_id,x1,y1,x2,y2`.
void save_tracks_csv(const std::string& path, std::span<const LineTrack> tracks);

}  // namespace evline
