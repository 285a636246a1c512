#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "hireg/cloud.hpp"
#include "hireg/descriptors.hpp"
#include "hireg/detectors.hpp"

namespace hireg::io {

// ASCII PLY: the vertex element must carry x, y, z properties; other
// properties and elements are skipped.
PointCloud read_ply(std::istream& in, std::string id = {});
void write_ply(std::ostream& out, const PointCloud& cloud);

// XYZ: whitespace-separated x y z per line, '#' starts a comment.
PointCloud read_xyz(std::istream& in, std::string id = {});
void write_xyz(std::ostream& out, const PointCloud& cloud);

/// Dispatches on extension (.ply or .xyz/.txt).
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// JSON {"rotation": [9 floats row-major], "translation": [3 floats]}.
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& t);

// Binary descriptor dump, little endian: "HDRG", u8 level, u32 count,
// u32 dim, then count*dim float32 row-major.
void write_descriptors(std::ostream& out, const DescriptorSet& descs);
DescriptorSet read_descriptors(std::istream& in);
void write_descriptors(const std::filesystem::path& path,
                       const DescriptorSet& descs,
                       const DescriptorParams& params);
DescriptorSet read_descriptors(const std::filesystem::path& path);

/// Sidecar path used next to a descriptor dump ("<path>.json").
std::filesystem::path sidecar_path(const std::filesystem::path& dump);

void write_scores(const std::filesystem::path& path, const ScoreSet& scores);
ScoreSet read_scores(const std::filesystem::path& path);

}  // namespace hireg::io
