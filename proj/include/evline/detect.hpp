#pragma once

#include <span>
#include <string>
#include <vector>

#include "evline/events.hpp"
#include "evline/lines2d.hpp"

namespace evline {

struct DetectorConfig {
  /// Support threshold on the max-normalized, 3x3-smoothed image.
  double threshold = 0.15;
  /// Segments shorter than this are discarded (px).
  double min_length = 15.0;
  /// Chains are split where they deviate from their chord by more than this (px).
  double split_tol = 1.5;
  /// Collinear pieces closer than join_gap along the line and within
  /// join_dist across it are joined (px / degrees).
  double join_gap = 6.0;
  double join_dist = 1.5;
  double join_angle_deg = 3.0;
};

/// Segment detector for accumulated event images: smooth, threshold,
/// thin to a one-pixel skeleton, trace skeleton chains between junctions,
/// split chains by maximum deviation, fit each piece by total least
/// squares and join collinear pieces. The output depends on the image only
/// up to a positive intensity scale.
std::vector<LineSegment2D> detect_segments(const Image& image, const DetectorConfig& cfg = {});

/// Max over both segments' endpoints of the distance to the other
/// segment's infinite line. Throws DegenerateError on a zero-length segment.
double perpendicular_distance(const LineSegment2D& a, const LineSegment2D& b);

/// Greedy duplicate suppression, longest first: a segment is dropped when
/// a kept one lies within merge_dist (perpendicular_distance) and
/// angle_tol_deg of it.
std::vector<LineSegment2D> merge_detections(std::vector<LineSegment2D> candidates,
                                            double merge_dist, double angle_tol_deg);

struct MwmrConfig {
  DetectorConfig detector;
  double merge_dist = 3.0;
  double angle_tol_deg = 5.0;
};

/// Detections from every image of the frame, tagged with the frame id,
/// t_obs = frame.t_center and their source image, without merging.
std::vector<LineSegment2D> mwmr_detect_raw(const EventFrame& frame, const MwmrConfig& cfg = {});
/// mwmr_detect_raw followed by merge_detections.
std::vector<LineSegment2D> mwmr_detect(const EventFrame& frame, const MwmrConfig& cfg = {});

struct DetectionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::size_t n_detections = 0;
};

/// Segment-level detection score against ground-truth image segments. A
/// detection is correct when it is within angle_tol_deg of some ground
/// truth segment, both its endpoints are within dist_tol of that segment's
/// line and at least half its length projects onto the segment. Recall is
/// the fraction of ground-truth length covered by correct detections.
DetectionScore score_detections(std::span<const LineSegment2D> detections,
                                std::span<const LineSegment2D> ground_truth, double dist_tol = 2.0,
                                double angle_tol_deg = 5.0);

/// Debug dump: CSV `frame_id,x1,y1,x2,y2,source`.
void save_segments_2d_csv(const std::string& path, std::span<const LineSegment2D> segments);

}  // namespace evline
