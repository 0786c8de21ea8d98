#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evline/camera.hpp"
#include "evline/geom.hpp"
#include "evline/synth.hpp"

namespace evline {

/// Exact nearest-neighbour queries over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  /// Index of the nearest point and its Euclidean distance. Throws on an
  /// empty tree.
  std::pair<std::size_t, double> nearest(const Vec3& q) const;
  double distance(const Vec3& q) const { return nearest(q).second; }

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    int axis;                  // -1 for a leaf
    double split;
    std::int32_t left, right;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// floor(len / spacing) + 1 evenly spaced points per line, endpoints
/// included. Lines without endpoints contribute nothing.
std::vector<Vec3> sample_line_points(std::span<const Line3D> lines, double spacing);

/// Mean distance from each predicted point to its nearest GT point.
double accuracy(std::span<const Vec3> predicted, std::span<const Vec3> gt_dense);
/// Mean distance from each GT edge point to its nearest predicted point.
double completion(std::span<const Vec3> gt_edge, std::span<const Vec3> predicted);
/// min(c_pred, c_gt) / (|P| + |G_edge| - max(c_pred, c_gt)) where c_pred
/// counts predicted points within delta of G_edge and c_gt the reverse.
double iou(std::span<const Vec3> predicted, std::span<const Vec3> gt_edge, double delta);

struct MetricReport {
  double accuracy = 0.0;
  double completion = 0.0;
  std::vector<double> thresholds;
  std::vector<double> iou;  ///< one per threshold
  std::size_t n_rep = 0;    ///< number of map entities (lines)
  std::size_t n_points = 0;
};

/// Default IoU thresholds in scene units (metres for the room preset).
inline const std::vector<double> kIouThresholds = {0.005, 0.01, 0.02};

MetricReport evaluate_map(std::span<const Line3D> lines, std::span<const Vec3> gt_edge,
                          double spacing, std::span<const double> thresholds = kIouThresholds);

/// `key: value` lines.
std::string report_text(const MetricReport& r);
/// Header and one row.
std::string report_csv(const MetricReport& r);

/// RMS camera-center error. With `align`, the estimate is first mapped by
/// the least-squares rigid transform onto the ground truth.
double ate(std::span<const CameraPose> estimate, std::span<const CameraPose> gt, bool align = false);

/// x -> R x + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }
};

double rotation_error_deg(const Mat3& estimate, const Mat3& gt);
double translation_error(const Vec3& estimate, const Vec3& gt);

struct IcpResult {
  RigidTransform transform;
  /// Mean squared NN distance before the first update and after each one.
  std::vector<double> residuals;
  int iterations = 0;
};

/// Point-to-point ICP aligning `source` onto `target`. Throws
/// std::invalid_argument when either set has fewer than 3 points or is
/// collinear.
IcpResult icp_register(std::span<const Vec3> source, std::span<const Vec3> target,
                       const RigidTransform& init = {}, int max_iterations = 50,
                       double tolerance = 1e-12);

struct RegistrationOptions {
  int n_trials = 10;
  double rot_std_deg = 10.0;
  double trans_std = 0.02;
  double spacing = 0.02;
  int max_iterations = 100;
  std::uint64_t seed = 0;
};

struct RegistrationSummary {
  double mean_rot_err_deg = 0.0;
  double mean_trans_err = 0.0;
  std::vector<double> rot_err_deg, trans_err;
};

/// Samples the map, perturbs it about its centroid by random rigid motions
/// and registers it back onto the GT points; errors are those of the
/// recovered motion composed with the perturbation.
RegistrationSummary registration_experiment(std::span<const Line3D> lines,
                                            std::span<const Vec3> gt_points,
                                            const RegistrationOptions& opt = {});

/// Per-GT-segment recovery. A predicted line is assigned to a segment when
/// the mean distance of its samples to that segment is below `max_accuracy`;
/// the segment counts as reconstructed when the assigned lines cover at
/// least `min_coverage` of its length.
struct SegmentRecovery {
  std::vector<double> coverage;  ///< per GT segment
  std::vector<bool> recovered;
  double rate = 0.0;
};
SegmentRecovery segment_recovery(std::span<const Line3D> lines, std::span<const Segment3D> gt,
                                 double max_accuracy, double min_coverage = 0.5,
                                 double spacing = 0.01);

}  // namespace evline
