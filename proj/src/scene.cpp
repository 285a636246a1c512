#include "hireg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hireg/errors.hpp"
#include "hireg/random.hpp"
#include "hireg/spatial_index.hpp"

namespace hireg {

const char* to_string(ShapeRecipe s) {
  switch (s) {
    case ShapeRecipe::kPlane: return "plane";
    case ShapeRecipe::kBox: return "box";
    case ShapeRecipe::kRoom: return "room";
  }
  return "room";
}

ShapeRecipe shape_from_string(std::string_view s) {
  if (s == "plane") return ShapeRecipe::kPlane;
  if (s == "box") return ShapeRecipe::kBox;
  if (s == "room") return ShapeRecipe::kRoom;
  throw ValidationError("unknown shape recipe '" + std::string(s) + "'");
}

void validate(const SceneSpec& spec) {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(spec.overlap) || !unit(spec.outlier_fraction)) {
    throw ValidationError("scene fractions must lie in [0, 1]");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ValidationError("scene noise sigma must be >= 0");
  }
  if (spec.points < 4) throw ValidationError("scene needs at least 4 points");
  if (!(spec.overlap_radius > 0.0)) throw ValidationError("overlap_radius must be > 0");
  if (spec.gt) validate(*spec.gt);
}

namespace {

// Axis-aligned rectangle: origin + s*u + t*v, s,t in [0,1].
struct Patch {
  Vec3 origin;
  Vec3 u;
  Vec3 v;
  double area() const { return u.cross(v).norm(); }
};

void add_box(std::vector<Patch>& patches, const Vec3& lo, const Vec3& size, bool bottom) {
  const Vec3 ex(size.x(), 0, 0), ey(0, size.y(), 0), ez(0, 0, size.z());
  patches.push_back({lo + ez, ex, ey});  // top
  if (bottom) patches.push_back({lo, ex, ey});
  patches.push_back({lo, ex, ez});
  patches.push_back({lo + ey, ex, ez});
  patches.push_back({lo, ey, ez});
  patches.push_back({lo + ex, ey, ez});
}

std::vector<Patch> make_patches(ShapeRecipe shape, Rng& rng) {
  std::vector<Patch> patches;
  switch (shape) {
    case ShapeRecipe::kPlane:
      patches.push_back({Vec3(0, 0, 0), Vec3(1.0, 0, 0), Vec3(0, 1.0, 0)});
      break;
    case ShapeRecipe::kBox:
      add_box(patches, Vec3(0, 0, 0), Vec3(0.6, 0.4, 0.3), true);
      break;
    case ShapeRecipe::kRoom: {
      const double lx = 1.2, ly = 1.0, lz = 0.8;
      patches.push_back({Vec3(0, 0, 0), Vec3(lx, 0, 0), Vec3(0, ly, 0)});   // floor
      patches.push_back({Vec3(0, 0, 0), Vec3(0, ly, 0), Vec3(0, 0, lz)});   // wall x=0
      patches.push_back({Vec3(0, 0, 0), Vec3(lx, 0, 0), Vec3(0, 0, lz)});   // wall y=0
      patches.push_back({Vec3(0, ly, 0), Vec3(lx, 0, 0), Vec3(0, 0, 0.5 * lz)});  // low wall y=ly
      const int boxes = 4;
      for (int b = 0; b < boxes; ++b) {
        const Vec3 size(uniform(rng, 0.12, 0.3), uniform(rng, 0.12, 0.3), uniform(rng, 0.08, 0.35));
        const Vec3 lo(uniform(rng, 0.05, lx - size.x() - 0.05),
                      uniform(rng, 0.05, ly - size.y() - 0.05), 0.0);
        add_box(patches, lo, size, false);
      }
      break;
    }
  }
  return patches;
}

std::vector<Vec3> sample_surface(const std::vector<Patch>& patches, std::size_t n, Rng& rng) {
  std::vector<double> cdf;
  double total = 0.0;
  for (const auto& p : patches) {
    total += p.area();
    cdf.push_back(total);
  }
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = uniform_open(rng) * total;
    const auto k = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::lower_bound(cdf.begin(), cdf.end(), a) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    const double s = uniform_open(rng);
    const double t = uniform_open(rng);
    pts.push_back(patches[k].origin + s * patches[k].u + t * patches[k].v);
  }
  return pts;
}

Vec3 random_unit(Rng& rng) {
  const double z = uniform(rng, -1.0, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 gaussian3(Rng& rng, double sigma) {
  const double x = normal(rng), y = normal(rng), z = normal(rng);
  return sigma * Vec3(x, y, z);
}

}  // namespace

RigidTransform random_transform(std::uint64_t seed, double max_rotation_deg,
                                double max_translation) {
  Rng rng(mix_seed(seed, 0x67));
  const Vec3 axis = random_unit(rng);
  const double angle = uniform(rng, 0.0, max_rotation_deg) * std::numbers::pi / 180.0;
  const Vec3 t(uniform(rng, -max_translation, max_translation),
               uniform(rng, -max_translation, max_translation),
               uniform(rng, -max_translation, max_translation));
  return rotation_about_axis(axis, angle, t);
}

double measure_overlap(const PointCloud& src, const PointCloud& tgt, const RigidTransform& gt,
                       double r) {
  validate(src);
  if (tgt.empty()) return 0.0;
  const SpatialIndex index(tgt);
  std::size_t hits = 0;
  for (const auto& p : src.points) {
    if (!index.radius_query(gt(p), r).empty()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(src.size());
}

Scene generate_scene(const SceneSpec& spec) {
  validate(spec);
  Rng rng(mix_seed(spec.seed, 0x5c));
  const auto patches = make_patches(spec.shape, rng);
  const auto clean = sample_surface(patches, spec.points, rng);

  Scene scene;
  scene.gt = spec.gt ? *spec.gt
                     : random_transform(mix_seed(spec.seed, 0x9d), spec.max_rotation_deg,
                                        spec.max_translation);
  scene.src.id = "src";
  scene.tgt.id = "tgt";
  Rng noise_rng(mix_seed(spec.seed, 0x11));
  scene.src.points.reserve(clean.size());
  for (const auto& p : clean) {
    scene.src.points.push_back(spec.noise_sigma > 0.0 ? Vec3(p + gaussian3(noise_rng, spec.noise_sigma)) : p);
  }

  Vec3 lo = clean.front(), hi = clean.front();
  for (const auto& p : clean) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }

  Rng crop_rng(mix_seed(spec.seed, 0xc7));
  double bias = 0.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::uint8_t> keep(clean.size(), 1);
    if (spec.overlap < 1.0) {
      // Keep the points beyond a plane chosen at the matching quantile.
      const Vec3 dir = random_unit(crop_rng);
      std::vector<double> proj(clean.size());
      for (std::size_t i = 0; i < clean.size(); ++i) proj[i] = clean[i].dot(dir);
      std::vector<double> sorted = proj;
      std::sort(sorted.begin(), sorted.end());
      const double frac = std::clamp(spec.overlap - bias, 0.0, 1.0);
      const auto drop = static_cast<std::size_t>(
          std::llround((1.0 - frac) * static_cast<double>(clean.size())));
      if (drop >= clean.size()) {
        std::fill(keep.begin(), keep.end(), 0);
      } else {
        const double cut = sorted[drop];
        for (std::size_t i = 0; i < clean.size(); ++i) keep[i] = proj[i] >= cut ? 1 : 0;
      }
    }

    PointCloud tgt;
    tgt.id = "tgt";
    Rng tgt_noise(mix_seed(spec.seed, 0x12 + static_cast<std::uint64_t>(attempt)));
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (!keep[i]) continue;
      const Vec3 p = spec.noise_sigma > 0.0 ? Vec3(clean[i] + gaussian3(tgt_noise, spec.noise_sigma))
                                            : clean[i];
      tgt.points.push_back(scene.gt(p));
    }
    if (spec.outlier_fraction > 0.0 && !tgt.empty()) {
      Rng out_rng(mix_seed(spec.seed, 0x40 + static_cast<std::uint64_t>(attempt)));
      const auto n_out = static_cast<std::size_t>(
          std::llround(spec.outlier_fraction * static_cast<double>(tgt.size())));
      for (std::size_t k = 0; k < n_out; ++k) {
        const auto j = static_cast<std::size_t>(uniform_index(out_rng, tgt.size()));
        const Vec3 p(uniform(out_rng, lo.x(), hi.x()), uniform(out_rng, lo.y(), hi.y()),
                     uniform(out_rng, lo.z(), hi.z()));
        tgt.points[j] = scene.gt(p);
      }
    }

    const double measured = tgt.empty() ? 0.0 : measure_overlap(scene.src, tgt, scene.gt, spec.overlap_radius);
    if (std::abs(measured - spec.overlap) <= 0.05 && !tgt.empty()) {
      scene.tgt = std::move(tgt);
      scene.src_overlap_mask = std::move(keep);
      scene.measured_overlap = measured;
      return scene;
    }
    const double kept = static_cast<double>(std::count(keep.begin(), keep.end(), 1)) /
                        static_cast<double>(clean.size());
    // Shrink the next crop by the excess of measured over kept overlap.
    bias = std::clamp(measured - kept, -0.5, 0.5);
  }
  throw Error(ErrorKind::kGeneration,
              "could not reach overlap target " + std::to_string(spec.overlap) +
                  " within 100 crop attempts");
}

}  // namespace hireg
