#pragma once

#include <cstdint>
#include <vector>

#include "hireg/descriptors.hpp"

namespace hireg {

/// Per-point scores of one level. detection[i] = matchability[i] * overlap[i].
class ScoreSet {
 public:
  ScoreSet() = default;
  /// Throws ValidationError on size mismatch or values outside [0, 1].
  ScoreSet(Level level, std::vector<double> matchability,
           std::vector<double> overlap);

  /// Scores where only the detection values are known (overlap = 1).
  static ScoreSet from_detection(Level level, std::vector<double> detection);

  Level level() const { return level_; }
  std::size_t size() const { return detection_.size(); }
  const std::vector<double>& matchability() const { return matchability_; }
  const std::vector<double>& overlap() const { return overlap_; }
  const std::vector<double>& detection() const { return detection_; }

 private:
  Level level_ = Level::kLow;
  std::vector<double> matchability_;
  std::vector<double> overlap_;
  std::vector<double> detection_;
};

struct KeypointSet {
  std::vector<std::size_t> indices;
  Level level = Level::kHigh;
  std::uint64_t sample_seed = 0;
  /// Requested count minus returned count when too few points score > 0.
  std::size_t shortfall = 0;

  std::size_t size() const { return indices.size(); }
};

/// Feature-space distinctiveness of each point relative to its k spatial
/// neighbors: the mean descriptor distance to them, divided by the 95th
/// percentile of that statistic over the cloud and clamped to [0, 1].
std::vector<double> score_saliency(const PointCloud& cloud,
                                   const DescriptorSet& descs,
                                   const SpatialIndex& index, std::size_t k);

/// exp(-d^2 / sigma^2) with d the nearest-neighbor feature distance of each
/// source descriptor into the target set and sigma the median of d.
std::vector<double> score_overlap_heuristic(const DescriptorSet& src_descs,
                                            const DescriptorSet& tgt_descs);

/// Draws n distinct indices without replacement, each draw proportional to
/// detection score (exponential keys). Zero-score points are never drawn.
/// Throws kDegenerateScores if every score is zero.
KeypointSet sample_keypoints(const ScoreSet& scores, std::size_t n,
                             std::uint64_t seed);

}  // namespace hireg
