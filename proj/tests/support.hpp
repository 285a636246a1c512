#pragma once

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "hireg/cloud.hpp"

namespace hireg::test {

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

// Built from a random unit quaternion rather than the library's helpers.
inline RigidTransform random_rigid(std::mt19937_64& rng, double max_t = 1.0) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-max_t, max_t);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation = Vec3(u(rng), u(rng), u(rng));
  return t;
}

inline std::vector<std::size_t> brute_radius(const PointCloud& c, const Vec3& q, double r) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if ((c[i] - q).squaredNorm() <= r * r) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> brute_knn(const PointCloud& c, const Vec3& q, std::size_t k) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return (c[a] - q).squaredNorm() < (c[b] - q).squaredNorm();
  });
  idx.resize(k);
  return idx;
}

// Planar grid z = 0 with the given spacing, n x n points.
inline PointCloud grid_plane(std::size_t n, double spacing) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c.points.emplace_back(i * spacing, j * spacing, 0.0);
  }
  return c;
}

inline double angle_between(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("hireg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace hireg::test
