#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hireg/cloud.hpp"

namespace hireg {

enum class ShapeRecipe { kPlane, kBox, kRoom };

const char* to_string(ShapeRecipe s);
ShapeRecipe shape_from_string(std::string_view s);

struct SceneSpec {
  ShapeRecipe shape = ShapeRecipe::kRoom;
  std::size_t points = 5000;
  double overlap = 0.7;
  double noise_sigma = 0.005;
  double outlier_fraction = 0.0;
  /// Ground truth; drawn from the seed when absent.
  std::optional<RigidTransform> gt;
  double max_rotation_deg = 180.0;
  double max_translation = 1.0;
  /// Radius used to measure the achieved overlap.
  double overlap_radius = 0.0375;
  std::uint64_t seed = 0;
};

void validate(const SceneSpec& spec);

struct Scene {
  PointCloud src;
  PointCloud tgt;
  RigidTransform gt;
  /// Per source point: inside the cropped region that tgt was made from.
  std::vector<std::uint8_t> src_overlap_mask;
  double measured_overlap = 0.0;
};

/// Samples a scene, then makes tgt a cropped, noised, transformed copy whose
/// measured overlap lies within +-0.05 of the target. Throws kGeneration
/// after 100 failed crop attempts.
Scene generate_scene(const SceneSpec& spec);

/// Fraction of src points with a tgt point within r after applying gt.
double measure_overlap(const PointCloud& src, const PointCloud& tgt,
                       const RigidTransform& gt, double r);

/// Rotation about a uniformly random axis by an angle uniform in
/// [0, max_rotation_deg], translation uniform in the cube of half-width
/// max_translation.
RigidTransform random_transform(std::uint64_t seed, double max_rotation_deg,
                                double max_translation);

}  // namespace hireg
