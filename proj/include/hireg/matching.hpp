#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hireg/cloud.hpp"
#include "hireg/descriptors.hpp"
#include "hireg/detectors.hpp"
#include "hireg/errors.hpp"
#include "hireg/spatial_index.hpp"

namespace hireg {

struct Correspondence {
  std::size_t source = 0;
  std::size_t target = 0;
  double weight = 1.0;

  bool operator==(const Correspondence&) const = default;
};

enum class Stage { kCoarse, kFine };

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  Stage stage = Stage::kCoarse;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Nearest neighbors in feature space from each source row into the target
/// rows (lowest index on ties). With `mutual` only mutually nearest pairs are
/// kept. Indices refer to rows of the given sets; weights are 1.
CorrespondenceSet match_features(const DescriptorSet& src,
                                 const DescriptorSet& tgt, bool mutual);

/// Weighted least-squares rigid transform mapping src onto tgt. Throws
/// kDegenerateGeometry for collinear/coincident inputs and ValidationError
/// for bad weights.
RigidTransform weighted_svd(std::span<const Vec3> src, std::span<const Vec3> tgt,
                            std::span<const double> weights);

struct RansacParams {
  std::size_t max_iterations = 50000;
  double inlier_threshold = 0.05;
  std::size_t sample_size = 3;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

void validate(const RansacParams& params);

struct RansacResult {
  RigidTransform transform;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  std::size_t iterations = 0;
};

/// Consensus transform over `corr` (indices into src/tgt points). The
/// returned mask is exactly the set of pairs with residual <= threshold
/// under the returned transform.
RansacResult ransac_transform(const PointCloud& src, const PointCloud& tgt,
                              const CorrespondenceSet& corr,
                              const RansacParams& params);

/// Mutual-nearest low-level matches between the radius cells around the two
/// endpoints of a coarse pair. Pair weights are the source points' low-level
/// detection scores (1 when none are given). Empty cells give an empty set.
/// With `coarse`, each cell also drops points that the coarse transform maps
/// outside the other cell.
CorrespondenceSet local_cell_match(const PointCloud& src, const PointCloud& tgt,
                                   const SpatialIndex& src_index,
                                   const SpatialIndex& tgt_index,
                                   const Correspondence& coarse_pair,
                                   const DescriptorSet& src_low,
                                   const DescriptorSet& tgt_low,
                                   double cell_radius,
                                   std::span<const double> src_detection = {},
                                   const RigidTransform* coarse = nullptr);

/// Keeps the top ceil(fraction * N) pairs by source detection score
/// (descending, ties by source then target index) and sets weights to those
/// scores.
CorrespondenceSet select_fine_subset(const CorrespondenceSet& all_fine,
                                     const ScoreSet& scores_low,
                                     double top_fraction);

/// Merges pairs with equal (source, target), keeping the highest weight.
CorrespondenceSet deduplicate(const CorrespondenceSet& pairs);

struct MatchingParams {
  std::size_t coarse_samples = 1000;
  /// 0 uses every point for the local cells.
  std::size_t fine_samples = 0;
  bool mutual = true;
  double cell_radius = 0.1;
  double top_fraction = 0.5;
  bool per_cell_selection = false;
  bool fine_fallback_to_coarse = true;
  std::size_t saliency_k = 16;
  /// Coarse consensus sets smaller than this are reported as no consensus.
  std::size_t min_coarse_inliers = 10;
  /// Fine pairs farther than this from the coarse alignment are dropped
  /// before selection; 0 disables the gate.
  double fine_gate = 0.0;
  /// Restrict each local cell to the part both cells share under the coarse
  /// transform.
  bool overlap_cells = true;
};

struct RegistrationConfig {
  DescriptorParams descriptors;
  RansacParams ransac;
  MatchingParams matching;
  std::uint64_t seed = 0;
};

struct StageTimings {
  double descriptors_ms = 0.0;
  double detection_ms = 0.0;
  double coarse_ms = 0.0;
  double fine_ms = 0.0;
  double total_ms = 0.0;
};

struct RegistrationResult {
  RigidTransform transform;
  RigidTransform coarse_transform;
  /// Indices into the source/target clouds.
  CorrespondenceSet coarse;
  std::vector<bool> coarse_inliers;
  CorrespondenceSet fine;
  std::size_t inlier_count = 0;
  std::size_t iterations_used = 0;
  bool fine_fallback = false;
  KeypointSet src_keypoints;
  KeypointSet tgt_keypoints;
  StageTimings timings;
};

/// Stage-labelled error raised by register_clouds.
class StageError : public Error {
 public:
  StageError(const Error& inner, std::string stage)
      : Error(inner.kind(), stage + ": " + inner.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Full global-to-local pipeline: descriptors, saliency and overlap scores,
/// high-level keypoint sampling, coarse matching with RANSAC, local-cell
/// low-level matching around coarse inliers, detector-driven subset
/// selection and a final weighted SVD.
RegistrationResult register_clouds(const PointCloud& src, const PointCloud& tgt,
                                   const RegistrationConfig& config);

}  // namespace hireg
