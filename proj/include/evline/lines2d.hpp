#pragma once

#include "evline/common.hpp"
#include "evline/events.hpp"

namespace evline {

/// A detected or refined image segment.
struct LineSegment2D {
  Vec2 p1 = Vec2::Zero();
  Vec2 p2 = Vec2::Zero();
  int frame_id = -1;
  TimeUs t_obs = 0;
  ImageKind source = ImageKind::kBinary;
  std::size_t source_window = 0;

  double length() const { return (p2 - p1).norm(); }
  Vec2 midpoint() const { return 0.5 * (p1 + p2); }
  /// Unit direction p1 -> p2. Undefined for zero-length segments.
  Vec2 direction() const { return (p2 - p1).normalized(); }
  /// Unit normal of the infinite line.
  Vec2 normal() const {
    const Vec2 d = direction();
    return {-d.y(), d.x()};
  }
};

/// Unsigned distance from a point to the infinite line through the segment.
double point_line_distance(const Vec2& p, const LineSegment2D& s);
/// Unsigned distance from a point to the closed segment.
double point_segment_distance(const Vec2& p, const LineSegment2D& s);
/// Orthogonal projection of a point onto the infinite line of the segment.
Vec2 project_onto_line(const Vec2& p, const LineSegment2D& s);
/// Acute angle between the two supporting lines, radians in [0, pi/2].
double line_angle(const LineSegment2D& a, const LineSegment2D& b);
/// Homogeneous line (a, b, c) with a x + b y + c = 0 and (a, b) unit.
Eigen::Vector3d homogeneous_line(const LineSegment2D& s);

}  // namespace evline
