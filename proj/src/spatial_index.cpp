#include "hireg/spatial_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "hireg/errors.hpp"

namespace hireg {
namespace {
constexpr std::uint32_t kLeafSize = 16;
}  // namespace

SpatialIndex::SpatialIndex(const PointCloud& cloud) {
  validate(cloud);
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("point cloud too large for the spatial index");
  }
  points_ = cloud.points;
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  root_ = build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{-1, 0.0, begin, end, -1, -1});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<std::size_t> SpatialIndex::radius_query(const Vec3& center,
                                                    double radius) const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw ValidationError("radius query needs a finite radius > 0");
  }
  if (!center.allFinite()) throw ValidationError("radius query center is not finite");
  std::vector<std::size_t> out;
  radius_recurse(root_, center, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

void SpatialIndex::radius_recurse(std::int32_t id, const Vec3& center,
                                  double r2, std::vector<std::size_t>& out) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      if ((points_[order_[i]] - center).squaredNorm() <= r2) out.push_back(order_[i]);
    }
    return;
  }
  const double diff = center[node.axis] - node.split;
  // left holds coordinates <= split, right holds >= split
  if (!(diff > 0.0 && diff * diff > r2)) radius_recurse(node.left, center, r2, out);
  if (!(diff < 0.0 && diff * diff > r2)) radius_recurse(node.right, center, r2, out);
}

std::vector<std::size_t> SpatialIndex::knn_query(const Vec3& center,
                                                 std::size_t k) const {
  if (k < 1 || k > points_.size()) {
    throw ValidationError("knn query needs 1 <= k <= point count (k = " +
                          std::to_string(k) + ", n = " +
                          std::to_string(points_.size()) + ")");
  }
  if (!center.allFinite()) throw ValidationError("knn query center is not finite");
  std::vector<Candidate> heap;
  heap.reserve(k + 1);
  knn_recurse(root_, center, k, heap);
  std::sort(heap.begin(), heap.end());
  std::vector<std::size_t> out;
  out.reserve(heap.size());
  for (const auto& c : heap) out.push_back(c.index);
  return out;
}

void SpatialIndex::knn_recurse(std::int32_t id, const Vec3& center,
                               std::size_t k, std::vector<Candidate>& heap) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const Candidate c{(points_[order_[i]] - center).squaredNorm(), order_[i]};
      if (heap.size() < k) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = center[node.axis] - node.split;
  const std::int32_t near = diff <= 0.0 ? node.left : node.right;
  const std::int32_t far = diff <= 0.0 ? node.right : node.left;
  knn_recurse(near, center, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().dist2) {
    knn_recurse(far, center, k, heap);
  }
}

std::size_t SpatialIndex::nearest(const Vec3& center) const {
  return knn_query(center, 1).front();
}

}  // namespace hireg
