#include "hireg/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hireg/config.hpp"
#include "hireg/errors.hpp"

namespace hireg::io {
namespace {

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

PointCloud read_ply(std::istream& in, std::string id) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw ValidationError("PLY: missing 'ply' magic");
  }
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ValidationError("PLY: property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
        std::string a, b, name;
        ls >> a >> b >> name;
        elements.back().props.push_back(name);
      } else {
        std::string name;
        ls >> name;
        elements.back().props.push_back(name);
      }
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!ascii) throw ValidationError("PLY: only ASCII PLY is supported");

  PointCloud cloud;
  cloud.id = std::move(id);
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) std::getline(in, line);
      continue;
    }
    if (e.has_list) throw ValidationError("PLY: list properties on vertices are not supported");
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      if (e.props[k] == "x") ix = static_cast<int>(k);
      if (e.props[k] == "y") iy = static_cast<int>(k);
      if (e.props[k] == "z") iz = static_cast<int>(k);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw ValidationError("PLY: vertex lacks x, y, z properties");
    cloud.points.reserve(e.count);
    std::vector<double> vals(e.props.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!std::getline(in, line)) throw ValidationError("PLY: truncated vertex data");
      std::istringstream ls(line);
      for (auto& v : vals) {
        if (!(ls >> v)) throw ValidationError("PLY: malformed vertex line " + std::to_string(i));
      }
      cloud.points.emplace_back(vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                                vals[static_cast<std::size_t>(iz)]);
    }
  }
  validate(cloud, false);
  return cloud;
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : cloud.points) {
    out << format_coord(p.x()) << ' ' << format_coord(p.y()) << ' ' << format_coord(p.z()) << '\n';
  }
}

PointCloud read_xyz(std::istream& in, std::string id) {
  PointCloud cloud;
  cloud.id = std::move(id);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;  // blank or comment-only
    if (!(ls >> y >> z)) throw ValidationError("XYZ: malformed line " + std::to_string(lineno));
    cloud.points.emplace_back(x, y, z);
  }
  validate(cloud, false);
  return cloud;
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    out << format_coord(p.x()) << ' ' << format_coord(p.y()) << ' ' << format_coord(p.z()) << '\n';
  }
}

PointCloud read_cloud(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto ext = path.extension().string();
  PointCloud cloud = ext == ".ply" ? read_ply(in, path.stem().string())
                                   : read_xyz(in, path.stem().string());
  return cloud;
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  if (path.extension() == ".ply") {
    write_ply(out, cloud);
  } else {
    write_xyz(out, cloud);
  }
}

RigidTransform read_transform(const std::filesystem::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
  return transform_from_json(j);
}

void write_transform(const std::filesystem::path& path, const RigidTransform& t) {
  auto out = open_out(path);
  out << to_json(t).dump(2) << '\n';
}

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw ValidationError("descriptor dump is truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_descriptors(std::ostream& out, const DescriptorSet& descs) {
  out.write("HDRG", 4);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(descs.level()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(descs.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(descs.dim()));
  for (double v : descs.data()) put_le<float>(out, static_cast<float>(v));
}

DescriptorSet read_descriptors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HDRG", 4) != 0) {
    throw ValidationError("descriptor dump: bad magic");
  }
  const auto level = get_le<std::uint8_t>(in);
  if (level > 1) throw ValidationError("descriptor dump: bad level byte");
  const auto count = get_le<std::uint32_t>(in);
  const auto dim = get_le<std::uint32_t>(in);
  if (dim == 0) throw ValidationError("descriptor dump: zero dimension");
  std::vector<double> data(static_cast<std::size_t>(count) * dim);
  for (auto& v : data) v = static_cast<double>(get_le<float>(in));
  return DescriptorSet(static_cast<Level>(level), dim, std::move(data));
}

std::filesystem::path sidecar_path(const std::filesystem::path& dump) {
  return std::filesystem::path(dump.string() + ".json");
}

void write_descriptors(const std::filesystem::path& path, const DescriptorSet& descs,
                       const DescriptorParams& params) {
  {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    write_descriptors(out, descs);
  }
  nlohmann::json side = {{"level", to_string(descs.level())},
                         {"count", descs.size()},
                         {"dim", descs.dim()},
                         {"params",
                          {{"low_radius", params.low_radius},
                           {"high_radius", params.high_radius},
                           {"normal_radius", params.normal_radius},
                           {"bins", params.bins}}}};
  auto out = open_out(sidecar_path(path));
  out << side.dump(2) << '\n';
}

DescriptorSet read_descriptors(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_descriptors(in);
}

void write_scores(const std::filesystem::path& path, const ScoreSet& scores) {
  nlohmann::json j = {{"level", to_string(scores.level())},
                      {"matchability", scores.matchability()},
                      {"overlap", scores.overlap()},
                      {"detection", scores.detection()}};
  auto out = open_out(path);
  out << j.dump() << '\n';
}

ScoreSet read_scores(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    nlohmann::json j;
    in >> j;
    return ScoreSet(level_from_string(j.at("level").get<std::string>()),
                    j.at("matchability").get<std::vector<double>>(),
                    j.at("overlap").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace hireg::io
