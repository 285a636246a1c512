#include "hireg/cloud.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "hireg/errors.hpp"

namespace hireg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kNoCorrespondence: return "no-correspondence";
    case ErrorKind::kNoConsensus: return "no-consensus";
    case ErrorKind::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::kDegenerateBatch: return "degenerate-batch";
    case ErrorKind::kDegenerateScores: return "degenerate-scores";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Vec3 PointCloud::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
}

void validate(const PointCloud& cloud, bool require_nonempty) {
  if (require_nonempty && cloud.empty()) {
    throw ValidationError("point cloud '" + cloud.id + "' is empty");
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.points[i].allFinite()) {
      throw ValidationError("point cloud '" + cloud.id +
                            "' has a non-finite coordinate at index " +
                            std::to_string(i));
    }
  }
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool is_valid(const RigidTransform& t, double tol) {
  if (!t.rotation.allFinite() || !t.translation.allFinite()) return false;
  const Mat3 gram = t.rotation.transpose() * t.rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(t.rotation.determinant() - 1.0) <= tol;
}

void validate(const RigidTransform& t) {
  if (!is_valid(t)) {
    throw ValidationError("rigid transform is not a proper rotation plus finite translation");
  }
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  validate(cloud, false);
  validate(t);
  PointCloud out;
  out.id = cloud.id;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t(p));
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  validate(a);
  validate(b);
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

RigidTransform invert(const RigidTransform& t) {
  validate(t);
  const Mat3 rt = t.rotation.transpose();
  return {rt, -(rt * t.translation)};
}

RigidTransform rotation_about_axis(const Vec3& axis, double angle_rad,
                                   const Vec3& translation) {
  if (axis.norm() == 0.0 || !axis.allFinite()) {
    throw ValidationError("rotation axis must be a finite nonzero vector");
  }
  return {Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(),
          translation};
}

}  // namespace hireg
