#include "doctest.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hireg/cli.hpp"
#include "hireg/config.hpp"
#include "hireg/io.hpp"
#include "hireg/matching.hpp"
#include "hireg/scene.hpp"
#include "support.hpp"

using namespace hireg;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run hireg_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hireg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.push_back(json::parse(line));
  }
  return v;
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("cli: help and argument errors") {
  CHECK(hireg_cli({"--help"}).code == 0);
  CHECK(hireg_cli({}).code == 1);
  CHECK(hireg_cli({"register", "--src", "a.ply"}).code == 1);
  CHECK(hireg_cli({"frobnicate"}).code == 1);
  CHECK(hireg_cli({"register", "--src", "/nonexistent.ply", "--tgt", "/nonexistent.ply"}).code == 1);
}

TEST_CASE("cli: gen-scene and register") {
  test::TempDir dir("cli_reg");
  const auto scene_dir = (dir / "scene").string();
  const auto gen = hireg_cli({"gen-scene", "--out", scene_dir, "--seed", "3", "--overlap", "0.8"});
  REQUIRE(gen.code == 0);
  for (const char* f : {"src.ply", "tgt.ply", "gt.json", "scene.json"}) {
    CHECK(std::filesystem::exists(dir.path() / "scene" / f));
  }
  const auto src_path = scene_dir + "/src.ply";
  const auto tgt_path = scene_dir + "/tgt.ply";

  SUBCASE("identity pair") {
    const auto r = hireg_cli({"register", "--src", src_path, "--tgt", src_path});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    const auto t = transform_from_json(j);
    CHECK((t.rotation - Mat3::Identity()).norm() < 1e-6);
    CHECK(t.translation.norm() < 1e-6);
  }
  SUBCASE("CLI output equals the library result") {
    const auto out_path = (dir / "result.json").string();
    const auto r = hireg_cli({"register", "--src", src_path, "--tgt", tgt_path, "--gt",
                              scene_dir + "/gt.json", "--seed", "4", "--out", out_path});
    REQUIRE(r.code == 0);
    std::ifstream in(out_path);
    const auto j = json::parse(in);
    RunConfig cfg;
    cfg.seed = 4;
    const auto lib = register_clouds(io::read_cloud(src_path), io::read_cloud(tgt_path),
                                     cfg.registration());
    const auto t = transform_from_json(j);
    CHECK(t.rotation == lib.transform.rotation);
    CHECK(t.translation == lib.transform.translation);
    CHECK(j.at("fine_pairs").size() == lib.fine.size());
    CHECK(j.at("registered").get<bool>());
    CHECK(j.at("rre_deg").get<double>() < 5.0);
  }
  SUBCASE("zero overlap exits with the no-consensus code") {
    std::mt19937_64 rng(110);
    io::write_cloud(dir / "noise.ply", test::random_cloud(rng, 3000, 3.0, 4.0));
    const auto r = hireg_cli({"register", "--src", src_path, "--tgt", (dir / "noise.ply").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("coarse") != std::string::npos);
  }
  SUBCASE("bad config") {
    write_text(dir / "cfg.json", R"({"ransac": {"confidence": 2}})");
    CHECK(hireg_cli({"register", "--src", src_path, "--tgt", src_path, "--config",
                     (dir / "cfg.json").string()})
              .code == 1);
  }
}

TEST_CASE("cli: bench") {
  test::TempDir dir("cli_bench");
  SUBCASE("empty pair list") {
    write_text(dir / "empty.json", R"({"pairs": []})");
    const auto r = hireg_cli({"bench", (dir / "empty.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("empty") != std::string::npos);
  }
  SUBCASE("easy pairs all register") {
    write_text(dir / "easy.json",
               R"({"generate": {"count": 10, "seed": 1,
                   "scene": {"overlap": 0.9, "noise_sigma": 0.002, "max_rotation_deg": 60}}})");
    const auto out_path = (dir / "report.json").string();
    const auto r = hireg_cli({"bench", (dir / "easy.json").string(), "--samples", "1000", "--out", out_path});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("#Samples") != std::string::npos);
    std::ifstream in(out_path);
    const auto j = json::parse(in);
    REQUIRE(j.at("blocks").size() == 1);
    CHECK(j["blocks"][0]["rr"].get<double>() == 1.0);
    CHECK(j["blocks"][0]["pairs"].size() == 10);
  }
  SUBCASE("one block per sample count") {
    write_text(dir / "two.json", R"({"generate": {"count": 2, "seed": 2}})");
    const auto out_path = (dir / "report.json").string();
    const auto r = hireg_cli({"bench", (dir / "two.json").string(), "--samples", "250,500,1000",
                              "--out", out_path});
    REQUIRE(r.code == 0);
    std::ifstream in(out_path);
    const auto j = json::parse(in);
    REQUIRE(j.at("blocks").size() == 3);
    CHECK(j["blocks"][0]["samples"] == 250);
    CHECK(j["blocks"][1]["samples"] == 500);
    CHECK(j["blocks"][2]["samples"] == 1000);
    CHECK(hireg_cli({"bench", (dir / "two.json").string(), "--samples", "0"}).code == 1);
  }
}

namespace {

// 5 x 5 grid with 4 cm spacing registered to itself, with one random
// descriptor per point at each level.
struct GridFixture {
  test::TempDir dir{"cli_labels"};
  std::string cloud, gt, low, high;
  std::vector<double> low_rows, high_rows;
  static constexpr std::size_t kDim = 8;

  GridFixture() {
    const auto c = test::grid_plane(5, 0.04);
    cloud = (dir / "grid.ply").string();
    gt = (dir / "gt.json").string();
    io::write_cloud(cloud, c);
    io::write_transform(gt, RigidTransform{});
    std::mt19937_64 rng(120);
    std::normal_distribution<double> g;
    low_rows.resize(25 * kDim);
    high_rows.resize(25 * kDim);
    for (auto& v : low_rows) v = g(rng);
    for (auto& v : high_rows) v = g(rng);
  }

  std::string dump(const std::string& name, Level level, const std::vector<double>& rows) const {
    const auto p = (dir / name).string();
    io::write_descriptors(p, DescriptorSet(level, kDim, rows), DescriptorParams{});
    return p;
  }
};

}  // namespace

TEST_CASE("cli: labels on a crafted grid") {
  GridFixture f;
  const auto src_low = f.dump("src_low.hdrg", Level::kLow, f.low_rows);
  const auto src_high = f.dump("src_high.hdrg", Level::kHigh, f.high_rows);
  const auto tgt_low = f.dump("tgt_low.hdrg", Level::kLow, f.low_rows);

  SUBCASE("distinct descriptors give rank 3 everywhere") {
    const auto r = hireg_cli({"labels", "--src", f.cloud, "--tgt", f.cloud, "--gt", f.gt,
                              "--samples", "25", "--src-low", src_low, "--src-high", src_high,
                              "--tgt-low", tgt_low, "--tgt-high", src_high});
    REQUIRE(r.code == 0);
    const auto recs = json_lines(r.out);
    REQUIRE(recs.size() == 25);
    for (const auto& rec : recs) {
      CHECK(rec.at("m_high") == 1);
      CHECK(rec.at("m_low") == 1);
      CHECK(rec.at("r_high") == 3);
      CHECK(rec.at("r_low") == 3);
    }
    CHECK(r.err.find("labeled 25 of 25 anchors") != std::string::npos);
  }
  SUBCASE("a far copy of the high descriptor breaks only high-level matchability") {
    // Center point 12 and corner 0 are 11.3 cm apart, beyond the global radius.
    auto rows = f.high_rows;
    std::copy_n(rows.begin() + 12 * GridFixture::kDim, GridFixture::kDim, rows.begin());
    const auto tgt_high = f.dump("tgt_high.hdrg", Level::kHigh, rows);
    const auto r = hireg_cli({"labels", "--src", f.cloud, "--tgt", f.cloud, "--gt", f.gt,
                              "--samples", "25", "--src-low", src_low, "--src-high", src_high,
                              "--tgt-low", tgt_low, "--tgt-high", tgt_high});
    REQUIRE(r.code == 0);
    for (const auto& rec : json_lines(r.out)) {
      const auto a = rec.at("anchor").get<std::size_t>();
      const bool touched = a == 0 || a == 12;
      CHECK(rec.at("m_high") == (touched ? 0 : 1));
      CHECK(rec.at("m_low") == 1);
      CHECK(rec.at("r_high") == (touched ? 1 : 3));
      CHECK(rec.at("r_low") == (touched ? 2 : 3));
    }
  }
  SUBCASE("wrong-sized dumps are rejected") {
    const auto small = (f.dir / "small.hdrg").string();
    io::write_descriptors(small, DescriptorSet(Level::kLow, 2, std::vector<double>{1, 0}),
                          DescriptorParams{});
    CHECK(hireg_cli({"labels", "--src", f.cloud, "--tgt", f.cloud, "--gt", f.gt, "--src-low", small})
              .code == 1);
    CHECK(hireg_cli({"labels", "--src", f.cloud, "--tgt", f.cloud, "--gt", f.gt, "--src-low", src_high})
              .code == 1);
  }
}

TEST_CASE("cli: labels record accounting on a generated scene") {
  test::TempDir dir("cli_labels_scene");
  const auto scene_dir = (dir / "s").string();
  REQUIRE(hireg_cli({"gen-scene", "--out", scene_dir, "--seed", "8", "--overlap", "0.5"}).code == 0);
  const auto r = hireg_cli({"labels", "--src", scene_dir + "/src.ply", "--tgt", scene_dir + "/tgt.ply",
                            "--gt", scene_dir + "/gt.json", "--samples", "64", "--seed", "2"});
  REQUIRE(r.code == 0);
  const auto recs = json_lines(r.out);
  CHECK(recs.size() == 64);
  std::size_t labeled = 0;
  for (const auto& rec : recs) {
    if (rec.contains("skipped_reason")) {
      CHECK_FALSE(rec.contains("m_high"));
      continue;
    }
    ++labeled;
    const int mh = rec.at("m_high"), ml = rec.at("m_low");
    CHECK(rec.at("r_high") == 2 * mh + ml);
    CHECK(rec.at("r_low") == 2 * ml + mh);
  }
  CHECK(r.err.find("labeled " + std::to_string(labeled) + " of 64") != std::string::npos);

  std::mt19937_64 rng(121);
  io::write_cloud(dir / "far.ply", test::random_cloud(rng, 100, 50.0, 60.0));
  CHECK(hireg_cli({"labels", "--src", scene_dir + "/src.ply", "--tgt", (dir / "far.ply").string(),
                   "--gt", scene_dir + "/gt.json"})
            .code == 2);
}

TEST_CASE("cli: losscheck") {
  const auto a = hireg_cli({"losscheck", "--seed", "5"});
  CHECK(a.code == 0);
  CHECK(a.out.find("FAIL") == std::string::npos);
  CHECK(hireg_cli({"losscheck", "--seed", "5"}).out == a.out);
  const auto bad = hireg_cli({"losscheck", "--seed", "5", "--corrupt-gradient", "rating"});
  CHECK(bad.code == 3);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}
