#include "hireg/descriptors.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "hireg/errors.hpp"
#include "hireg/kernels.hpp"
#include "hireg/parallel.hpp"

namespace hireg {

const char* to_string(Level level) { return level == Level::kLow ? "low" : "high"; }

Level level_from_string(std::string_view s) {
  if (s == "low" || s == "Low") return Level::kLow;
  if (s == "high" || s == "High") return Level::kHigh;
  throw ValidationError("unknown descriptor level '" + std::string(s) + "'");
}

DescriptorSet::DescriptorSet(Level level, std::size_t count, std::size_t dim)
    : level_(level), dim_(dim), data_(count * dim, 0.0) {
  if (dim == 0) throw ValidationError("descriptor dimension must be >= 1");
}

DescriptorSet::DescriptorSet(Level level, std::size_t dim, std::vector<double> data)
    : level_(level), dim_(dim), data_(std::move(data)) {
  if (dim == 0) throw ValidationError("descriptor dimension must be >= 1");
  if (data_.size() % dim != 0) {
    throw ValidationError("descriptor data size is not a multiple of the dimension");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw ValidationError("descriptor entry is not finite");
  }
}

DescriptorSet DescriptorSet::subset(std::span<const std::size_t> indices) const {
  DescriptorSet out(level_, indices.size(), dim_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw ValidationError("descriptor subset index out of range");
    std::copy_n(row(indices[k]).begin(), dim_, out.row(k).begin());
  }
  return out;
}

void validate(const DescriptorParams& p) {
  if (!(p.low_radius > 0.0) || !(p.low_radius < p.high_radius) ||
      !std::isfinite(p.high_radius)) {
    throw ValidationError("descriptor radii must satisfy 0 < low_radius < high_radius");
  }
  if (!(p.normal_radius > 0.0) || !std::isfinite(p.normal_radius)) {
    throw ValidationError("normal_radius must be > 0");
  }
  if (p.bins < 2) throw ValidationError("descriptor bins must be >= 2");
}

namespace {

struct Moments {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
};

Moments neighborhood_moments(const SpatialIndex& index,
                             const std::vector<std::size_t>& nbrs) {
  Moments m;
  for (auto j : nbrs) m.mean += index.point(j);
  m.mean /= static_cast<double>(nbrs.size());
  for (auto j : nbrs) {
    const Vec3 d = index.point(j) - m.mean;
    m.cov.noalias() += d * d.transpose();
  }
  m.cov /= static_cast<double>(nbrs.size());
  return m;
}

}  // namespace

std::vector<Vec3> estimate_normals(const PointCloud& cloud, double radius) {
  return estimate_normals(cloud, SpatialIndex(cloud), radius);
}

std::vector<Vec3> estimate_normals(const PointCloud& cloud,
                                   const SpatialIndex& index, double radius) {
  validate(cloud);
  if (!(radius > 0.0)) throw ValidationError("normal radius must be > 0");
  const Vec3 centroid = cloud.centroid();
  std::vector<Vec3> normals(cloud.size(), Vec3::Zero());
  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nbrs = index.radius_query(cloud[i], radius);
    if (nbrs.size() < 3) return;
    const Moments m = neighborhood_moments(index, nbrs);
    Eigen::SelfAdjointEigenSolver<Mat3> solver(m.cov);
    const Vec3 ev = solver.eigenvalues();
    // Collinear or coincident neighborhoods have no defined normal.
    if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300))) return;
    Vec3 n = solver.eigenvectors().col(0).normalized();
    const Vec3 outward = cloud[i] - centroid;
    const double s = n.dot(outward);
    if (std::abs(s) > 1e-6 * outward.norm()) {
      if (s < 0.0) n = -n;
    } else {
      int axis = 0;
      n.cwiseAbs().maxCoeff(&axis);
      if (n[axis] < 0.0) n = -n;
    }
    normals[i] = n;
  });
  return normals;
}

DescriptorSet compute_descriptors(const PointCloud& cloud, Level level,
                                  const DescriptorParams& params) {
  validate(cloud);
  validate(params);
  const SpatialIndex index(cloud);
  const auto normals = estimate_normals(cloud, index, params.normal_radius);
  return compute_descriptors(cloud, index, normals, level, params);
}

DescriptorSet compute_descriptors(const PointCloud& cloud,
                                  const SpatialIndex& index,
                                  std::span<const Vec3> normals, Level level,
                                  const DescriptorParams& params) {
  validate(cloud);
  validate(params);
  if (normals.size() != cloud.size()) {
    throw ValidationError("normals and cloud sizes differ");
  }
  const double radius = level == Level::kLow ? params.low_radius : params.high_radius;
  const auto bins = static_cast<std::size_t>(params.bins);
  const std::size_t dim = params.dimension(level);
  DescriptorSet out(level, cloud.size(), dim);

  const auto bin_of = [bins](double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
  };

  parallel_for(cloud.size(), [&](std::size_t i) {
    const Vec3& ni = normals[i];
    if (ni.isZero()) return;
    const auto nbrs = index.radius_query(cloud[i], radius);
    auto row = out.row(i);
    std::size_t count = 0;
    for (auto j : nbrs) {
      if (j == i || normals[j].isZero()) continue;
      const Vec3 delta = cloud[j] - cloud[i];
      const double len = delta.norm();
      if (len == 0.0) continue;
      const Vec3 d = delta / len;
      const Vec3& nj = normals[j];
      row[bin_of(std::abs(ni.dot(nj)))] += 1.0;
      row[bins + bin_of(std::abs(ni.dot(d)))] += 1.0;
      row[2 * bins + bin_of(std::abs(nj.dot(d)))] += 1.0;
      ++count;
    }
    if (count == 0) return;
    for (std::size_t b = 0; b < 3 * bins; ++b) row[b] /= static_cast<double>(count);

    if (level == Level::kHigh) {
      const Moments m = neighborhood_moments(index, nbrs);
      Eigen::SelfAdjointEigenSolver<Mat3> solver(m.cov, Eigen::EigenvaluesOnly);
      const Vec3 ev = solver.eigenvalues().cwiseMax(0.0);
      const double trace = ev.sum();
      if (!(trace > 0.0)) {
        std::fill(row.begin(), row.end(), 0.0);
        return;
      }
      for (int k = 0; k < 3; ++k) row[3 * bins + static_cast<std::size_t>(k)] = ev[k] / trace;
    }

    double norm2 = 0.0;
    for (double v : row) norm2 += v * v;
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : row) v *= inv;
  });
  return out;
}

double feature_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("feature_distance: dimension mismatch (" +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  return std::sqrt(kernels::squared_l2(a, b));
}

}  // namespace hireg
