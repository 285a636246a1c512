#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hireg/training.hpp"

namespace hireg::gradcheck {

/// Central difference of f at x along coordinate i with step h. x is
/// restored before returning.
double central_difference(const std::function<double(std::span<const double>)>& f,
                          std::vector<double>& x, std::size_t i, double h);

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-4);

/// Direct evaluation of the circle loss, log(1 + sum * sum) with plain loops
/// and no log-sum-exp rewriting. Skips anchors the same way circle_loss does.
double circle_loss_direct(const DescriptorSet& src, const DescriptorSet& tgt,
                          const SampleBatch& batch, NegativeMode mode,
                          const CircleLossParams& params);

double rating_loss_direct(std::span<const double> scores, std::span<const int> rankings,
                          const TargetScores& targets);

double overlap_loss_direct(std::span<const double> pred, std::span<const std::uint8_t> labels);

/// Random descriptors (unit rows of dimension dim) and an index-only batch
/// with 1-3 positives and 2-6 negatives per anchor in each negative set.
struct RandomCircleProblem {
  DescriptorSet src;
  DescriptorSet tgt;
  SampleBatch batch;
};
RandomCircleProblem random_circle_problem(std::uint64_t seed, std::size_t anchors,
                                          std::size_t dim);

struct CheckResult {
  std::string name;
  double max_gradient_error = 0.0;  // relative
  double loss_difference = 0.0;     // absolute, against the direct evaluation
  std::size_t coordinates = 0;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  std::size_t coordinates = 20;
  double step = 1e-5;
  /// Name of a check whose analytic gradient gets deliberately corrupted.
  std::optional<std::string> corrupt;
};

/// Runs circle (global/local, both weightings), rating and overlap checks.
std::vector<CheckResult> run_loss_checks(const CheckOptions& options);

constexpr double kGradientTolerance = 1e-4;
constexpr double kLossTolerance = 1e-10;

}  // namespace hireg::gradcheck
