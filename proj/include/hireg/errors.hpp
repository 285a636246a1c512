#pragma once

#include <stdexcept>
#include <string>

namespace hireg {

enum class ErrorKind {
  kValidation,
  kNoCorrespondence,
  kNoConsensus,
  kDegenerateGeometry,
  kDegenerateBatch,
  kDegenerateScores,
  kGeneration,
  kNumerical,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Base of every library error; kind() names the failure category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

/// RANSAC failed to find a model supported by at least `sample_size` pairs.
class NoConsensusError : public Error {
 public:
  NoConsensusError(const std::string& what, std::size_t best_inliers,
                   double best_mean_residual)
      : Error(ErrorKind::kNoConsensus, what),
        best_inliers_(best_inliers),
        best_mean_residual_(best_mean_residual) {}

  std::size_t best_inliers() const { return best_inliers_; }
  double best_mean_residual() const { return best_mean_residual_; }

 private:
  std::size_t best_inliers_;
  double best_mean_residual_;
};

}  // namespace hireg
