#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <string>
#include <vector>

namespace hireg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered set of 3D points in meters. Invariant: all coordinates finite.
struct PointCloud {
  std::vector<Vec3> points;
  std::string id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Vec3& operator[](std::size_t i) const { return points[i]; }

  Vec3 centroid() const;
};

/// Throws ValidationError on non-finite coordinates or (if require_nonempty)
/// an empty cloud.
void validate(const PointCloud& cloud, bool require_nonempty = true);

constexpr double kRotationTolerance = 1e-9;

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d matrix() const;
};

/// Checks orthonormality and det = +1 within kRotationTolerance.
bool is_valid(const RigidTransform& t, double tol = kRotationTolerance);
void validate(const RigidTransform& t);

/// Projects an arbitrary 3x3 matrix onto SO(3). Used after parsing
/// rotations that were serialized with limited precision.
Mat3 nearest_rotation(const Mat3& m);

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

/// apply(compose(a, b), p) == apply(a, apply(b, p))
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

RigidTransform rotation_about_axis(const Vec3& axis, double angle_rad,
                                   const Vec3& translation = Vec3::Zero());

}  // namespace hireg
