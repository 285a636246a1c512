#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hireg/cloud.hpp"
#include "hireg/descriptors.hpp"

namespace hireg {

/// Positive ball, local negative annulus and global negative exterior used
/// to classify target points around a gt-aligned anchor.
struct SamplingRadii {
  double r_p = 0.0375;
  double r_n_local = 0.05;
  double r_n_global = 0.1;
};

void validate(const SamplingRadii& radii);

/// One anchor with its positive, global-negative and local-negative target
/// indices. The three sets are disjoint.
struct AnchorSamples {
  std::size_t anchor = 0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> global_negatives;
  std::vector<std::size_t> local_negatives;
};

struct SampleBatch {
  std::vector<AnchorSamples> anchors;
  std::size_t eligible_anchors = 0;

  std::size_t size() const { return anchors.size(); }
};

/// Samples up to n_p anchors (uniformly, seeded, without replacement) among
/// source points with at least one target point within r_p after applying
/// gt. Throws kNoCorrespondence when no such point exists.
SampleBatch build_sample_batch(const PointCloud& source,
                               const PointCloud& target,
                               const RigidTransform& gt,
                               const SamplingRadii& radii, std::size_t n_p,
                               std::uint64_t seed);

enum class NegativeMode { kGlobal, kLocal };

enum class CircleWeighting {
  /// beta_p = gamma*max(0, d - delta_p), beta_n = gamma*max(0, delta_n - d)
  kSelfPaced,
  /// beta = gamma for every pair
  kConstant,
};

struct CircleLossParams {
  double delta_p = 0.1;
  double delta_n = 1.4;
  double gamma = 10.0;
  CircleWeighting weighting = CircleWeighting::kSelfPaced;
};

void validate(const CircleLossParams& params);

struct LossResult {
  double loss = 0.0;
  /// Same layout as the inputs; see each function for which inputs.
  std::vector<double> gradient;
};

struct CircleLossResult {
  double loss = 0.0;
  std::vector<double> grad_src;  // layout of descs_src.data()
  std::vector<double> grad_tgt;  // layout of descs_tgt.data()
  std::size_t used_anchors = 0;
  std::size_t skipped_anchors = 0;
};

/// Mean over anchors of
///   log(1 + sum_p exp(beta_p (d_p - delta_p)) * sum_n exp(beta_n (delta_n - d_n)))
/// with analytic gradient w.r.t. every descriptor entry. Anchors with an
/// empty positive or negative set are skipped and counted. Throws
/// kDegenerateBatch if every anchor is skipped.
CircleLossResult circle_loss(const DescriptorSet& descs_src,
                             const DescriptorSet& descs_tgt,
                             const SampleBatch& batch, NegativeMode negatives,
                             const CircleLossParams& params);

enum class PositiveReduction { kMin, kMean };

struct MatchabilityLabels {
  std::vector<std::uint8_t> bits;
  /// False where the anchor lacks positives or the level's negatives.
  std::vector<bool> valid;
};

/// bit = 1 iff d_pos < d_neg, where d_neg is the closest negative of the
/// level's set (Low: local, High: global) and d_pos reduces the positives.
MatchabilityLabels matchability_labels(
    const DescriptorSet& descs_src, const DescriptorSet& descs_tgt,
    const SampleBatch& batch, Level level,
    PositiveReduction reduction = PositiveReduction::kMin);

struct Rankings {
  std::vector<int> r_high;
  std::vector<int> r_low;
};

/// r_high = 2 m_high + m_low, r_low = 2 m_low + m_high.
Rankings keypoint_rankings(std::span<const std::uint8_t> m_high,
                           std::span<const std::uint8_t> m_low);

/// Target scores indexed by rank: values[r] is the target for rank r.
struct TargetScores {
  std::array<double, 4> values{0.0, 0.25, 0.75, 1.0};

  double operator[](int rank) const { return values[static_cast<std::size_t>(rank)]; }
};

void validate(const TargetScores& targets);

/// Mean squared error against the rank targets; gradient w.r.t. scores.
LossResult rating_loss(std::span<const double> scores,
                       std::span<const int> rankings,
                       const TargetScores& targets);

struct OverlapLabels {
  std::vector<std::uint8_t> source;
  std::vector<std::uint8_t> target;
};

OverlapLabels overlap_labels(const PointCloud& source, const PointCloud& target,
                             const RigidTransform& gt, double r_p);

constexpr double kOverlapClamp = 1e-7;

/// Mean binary cross-entropy with predictions clamped to
/// [kOverlapClamp, 1 - kOverlapClamp]; gradient w.r.t. the raw predictions.
LossResult overlap_loss(std::span<const double> pred,
                        std::span<const std::uint8_t> labels);

struct LossComponents {
  double descriptor_high = 0.0;
  double descriptor_low = 0.0;
  double overlap = 0.0;
  double matchability_high = 0.0;
  double matchability_low = 0.0;
};

struct LossWeights {
  double descriptor_high = 1.0;
  double descriptor_low = 1.0;
  double overlap = 1.0;
  double matchability_high = 1.0;
  double matchability_low = 1.0;
};

double total_loss(const LossComponents& c, const LossWeights& w = {});

}  // namespace hireg
