#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hireg/cloud.hpp"

namespace hireg {

/// Immutable kd-tree over a point cloud. Queries use closed Euclidean balls
/// and return exactly what a linear scan over the cloud would.
///
/// The index keeps a copy of the points, so it stays valid if the source
/// cloud is destroyed.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Indices i with |points[i] - center| <= radius, sorted ascending.
  std::vector<std::size_t> radius_query(const Vec3& center,
                                        double radius) const;

  /// The k nearest indices in nondecreasing distance order. Equal distances
  /// are ordered by lower index.
  std::vector<std::size_t> knn_query(const Vec3& center, std::size_t k) const;

  /// Index of the single nearest point (lowest index among ties).
  std::size_t nearest(const Vec3& center) const;

 private:
  struct Node {
    // Leaf when axis < 0: [begin, end) indexes into order_.
    int axis = -1;
    double split = 0.0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void radius_recurse(std::int32_t node, const Vec3& center, double r2,
                      std::vector<std::size_t>& out) const;

  struct Candidate {
    double dist2;
    std::size_t index;
    bool operator<(const Candidate& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };
  void knn_recurse(std::int32_t node, const Vec3& center, std::size_t k,
                   std::vector<Candidate>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

/// Convenience wrapper matching the free-function form used in tests/docs.
inline SpatialIndex build_index(const PointCloud& cloud) {
  return SpatialIndex(cloud);
}

}  // namespace hireg
