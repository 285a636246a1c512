#pragma once

#include <span>
#include <vector>

#include "hireg/cloud.hpp"
#include "hireg/spatial_index.hpp"

namespace hireg {

enum class Level : unsigned char { kLow = 0, kHigh = 1 };

const char* to_string(Level level);
Level level_from_string(std::string_view s);

/// Per-point feature vectors of one level, stored row-major.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(Level level, std::size_t count, std::size_t dim);
  DescriptorSet(Level level, std::size_t dim, std::vector<double> data);

  Level level() const { return level_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Rows at the given indices, in that order.
  DescriptorSet subset(std::span<const std::size_t> indices) const;

 private:
  Level level_ = Level::kLow;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct DescriptorParams {
  double low_radius = 0.1;
  double high_radius = 0.4;
  double normal_radius = 0.05;
  int bins = 11;

  std::size_t dimension(Level level) const {
    return level == Level::kLow ? 3 * bins : 3 * bins + 3;
  }
};

void validate(const DescriptorParams& params);

/// Smallest-eigenvalue eigenvector of each point's radius neighborhood
/// covariance, oriented so that n . (p - centroid) >= 0. Neighborhoods with
/// fewer than 3 points give (0, 0, 0).
std::vector<Vec3> estimate_normals(const PointCloud& cloud, double radius);
std::vector<Vec3> estimate_normals(const PointCloud& cloud,
                                   const SpatialIndex& index, double radius);

/// Angular pair-feature histogram over the neighborhood at the level's radius.
/// For each neighbor j of i with d = (p_j - p_i)/|p_j - p_i| the triple
/// (|n_i.n_j|, |n_i.d|, |n_j.d|) is binned into three histograms of `bins`
/// bins each; the High level appends the trace-normalized, ascending
/// eigenvalues of the neighborhood covariance. Rows are L2 normalized, or
/// zero for degenerate neighborhoods.
DescriptorSet compute_descriptors(const PointCloud& cloud, Level level,
                                  const DescriptorParams& params);

/// Variant reusing a prebuilt index and normals (both levels share them).
DescriptorSet compute_descriptors(const PointCloud& cloud,
                                  const SpatialIndex& index,
                                  std::span<const Vec3> normals, Level level,
                                  const DescriptorParams& params);

double feature_distance(std::span<const double> a, std::span<const double> b);

}  // namespace hireg
