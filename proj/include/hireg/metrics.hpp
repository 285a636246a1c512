#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hireg/cloud.hpp"
#include "hireg/detectors.hpp"
#include "hireg/matching.hpp"

namespace hireg {

/// Geodesic angle between the two rotations, in degrees, in [0, 180].
double rotation_error(const RigidTransform& est, const RigidTransform& gt);

/// |t_est - t_gt| in meters.
double translation_error(const RigidTransform& est, const RigidTransform& gt);

struct PairEvaluation {
  double rre = 0.0;
  double rte = 0.0;
  double inlier_ratio = 0.0;
  double coarse_inlier_ratio = 0.0;
  bool fmr_hit = false;
  double repeatability = 0.0;
  bool registered = false;
};

struct MetricThresholds {
  double rre_max_deg = 5.0;
  double rte_max_m = 2.0;
  double inlier_tau = 0.1;
  double fmr_threshold = 0.05;
  double repeatability_radius = 0.1;
};

/// Fraction of pairs with rre < rre_max AND rte < rte_max.
double registration_recall(std::span<const PairEvaluation> evals,
                           double rre_max_deg, double rte_max_m);

struct InlierRatio {
  double ratio = 0.0;
  bool empty = false;
};

/// Fraction of pairs with |gt(src_i) - tgt_j| <= tau. Empty input gives
/// ratio 0 with the `empty` flag set.
InlierRatio inlier_ratio(const CorrespondenceSet& corr, const PointCloud& src,
                         const PointCloud& tgt, const RigidTransform& gt,
                         double tau);

/// Fraction of ratios strictly greater than threshold.
double feature_matching_recall(std::span<const double> inlier_ratios,
                               double threshold = 0.05);

/// Fraction of source keypoints whose gt-transformed location has a target
/// keypoint within r.
double repeatability(const KeypointSet& kp_src, const KeypointSet& kp_tgt,
                     const PointCloud& src, const PointCloud& tgt,
                     const RigidTransform& gt, double r);

PairEvaluation evaluate_pair(const RegistrationResult& result,
                             const PointCloud& src, const PointCloud& tgt,
                             const RigidTransform& gt,
                             const MetricThresholds& thresholds);

struct MetricBlock {
  std::size_t samples = 0;
  std::vector<PairEvaluation> pairs;
  std::vector<std::string> pair_labels;
  std::vector<std::string> failures;  // per pair, empty string on success

  double rr = 0.0;
  // RRE/RTE aggregates are over registered pairs only; NaN if none.
  double mean_rre = 0.0;
  double median_rre = 0.0;
  double mean_rte = 0.0;
  double median_rte = 0.0;
  double mean_ir = 0.0;
  double mean_coarse_ir = 0.0;
  double fmr = 0.0;
  double mean_rep = 0.0;
};

/// Recomputes every aggregate of the block from its per-pair rows.
void aggregate(MetricBlock& block, const MetricThresholds& thresholds);

struct BenchmarkReport {
  std::vector<MetricBlock> blocks;
  MetricThresholds thresholds;
  std::string recall_definition = "pose-threshold (RRE < rre_max and RTE < rte_max)";
};

/// Aligned text table: metric rows by sample-count columns.
std::string format_table(const BenchmarkReport& report);

}  // namespace hireg
