#include "doctest.h"

#include "hireg/detectors.hpp"
#include "hireg/errors.hpp"
#include "hireg/scene.hpp"
#include "support.hpp"

using namespace hireg;

TEST_CASE("score set invariants") {
  const ScoreSet s(Level::kLow, {0.5, 1.0, 0.0}, {0.5, 0.2, 1.0});
  CHECK(s.detection() == std::vector<double>{0.25, 0.2, 0.0});
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s.detection()[i] <= s.matchability()[i]);
    CHECK(s.detection()[i] <= s.overlap()[i]);
  }
  CHECK_THROWS_AS(ScoreSet(Level::kLow, {1.5}, {1.0}), ValidationError);
  CHECK_THROWS_AS(ScoreSet(Level::kLow, {0.5}, {-0.1}), ValidationError);
  CHECK_THROWS_AS(ScoreSet(Level::kLow, {0.5, 0.5}, {1.0}), ValidationError);
  CHECK_THROWS_AS(ScoreSet(Level::kLow, {std::nan("")}, {1.0}), ValidationError);
}

TEST_CASE("saliency on a uniform plane is zero in the interior") {
  const auto c = test::grid_plane(40, 0.01);
  const SpatialIndex idx(c);
  const auto d = compute_descriptors(c, Level::kLow, DescriptorParams{});
  const auto s = score_saliency(c, d, idx, 16);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c[i];
    if (p.x() > 0.17 && p.y() > 0.17 && p.x() < 0.22 && p.y() < 0.22) CHECK(s[i] < 1e-6);
  }
}

TEST_CASE("saliency ranks a corner in the top decile") {
  // Floor plus two walls meeting at the origin.
  PointCloud c;
  const double h = 0.01;
  for (int i = 0; i <= 60; ++i)
    for (int j = 0; j <= 60; ++j) c.points.emplace_back(i * h, j * h, 0.0);
  for (int i = 0; i <= 60; ++i)
    for (int k = 1; k <= 30; ++k) {
      c.points.emplace_back(0.0, i * h, k * h);
      if (i > 0) c.points.emplace_back(i * h, 0.0, k * h);
    }
  const SpatialIndex idx(c);
  const auto d = compute_descriptors(c, Level::kLow, DescriptorParams{});
  const auto s = score_saliency(c, d, idx, 16);
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  const double decile = sorted[sorted.size() * 9 / 10];
  std::size_t corner = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].norm() < 0.04) {
      ++corner;
      CHECK(s[i] >= decile);
    }
  }
  CHECK(corner == 34);
}

TEST_CASE("saliency of identical descriptors is zero") {
  std::mt19937_64 rng(50);
  const auto c = test::random_cloud(rng, 100);
  const SpatialIndex idx(c);
  std::vector<double> rows(100 * 3);
  for (std::size_t i = 0; i < 100; ++i) rows[i * 3] = 1.0;
  const DescriptorSet d(Level::kLow, 3, rows);
  for (double v : score_saliency(c, d, idx, 8)) CHECK(v == 0.0);
  CHECK_THROWS_AS(score_saliency(c, d, idx, 100), ValidationError);
}

TEST_CASE("overlap heuristic") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g;
  std::vector<double> rows(50 * 4);
  for (auto& v : rows) v = g(rng);
  const DescriptorSet d(Level::kHigh, 4, rows);
  SUBCASE("identical descriptors score 1") {
    for (double v : score_overlap_heuristic(d, d)) CHECK(v == 1.0);
  }
  SUBCASE("orthogonal target scores below 1") {
    const DescriptorSet a(Level::kHigh, 2, std::vector<double>{1, 0, 1, 0, 0.9, 0.1});
    const DescriptorSet b(Level::kHigh, 2, std::vector<double>{0, 1});
    const auto s = score_overlap_heuristic(a, b);
    for (double v : s) CHECK(v < 1.0);
    // Largest d gets the smallest score exp(-(d/sigma)^2).
    CHECK(s[2] > s[0]);
  }
  SUBCASE("empty target and mismatched dimension") {
    CHECK_THROWS_AS(score_overlap_heuristic(d, DescriptorSet(Level::kHigh, 0, 4)), ValidationError);
    CHECK_THROWS_AS(score_overlap_heuristic(d, DescriptorSet(Level::kHigh, 3, 5)), ValidationError);
  }
}

TEST_CASE("overlap heuristic favors the true overlap region") {
  SceneSpec spec;
  spec.overlap = 0.5;
  spec.seed = 12;
  const auto scene = generate_scene(spec);
  const DescriptorParams p;
  const auto ds = compute_descriptors(scene.src, Level::kHigh, p);
  const auto dt = compute_descriptors(scene.tgt, Level::kHigh, p);
  const auto s = score_overlap_heuristic(ds, dt);
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (scene.src_overlap_mask[i]) {
      in += s[i];
      ++n_in;
    } else {
      out += s[i];
      ++n_out;
    }
  }
  REQUIRE(n_in > 0);
  REQUIRE(n_out > 0);
  CHECK(in / n_in > out / n_out);
}

TEST_CASE("sample_keypoints basics") {
  SUBCASE("single positive score") {
    auto s = ScoreSet::from_detection(Level::kHigh, {0, 0, 1, 0});
    const auto k = sample_keypoints(s, 1, 3);
    CHECK(k.indices == std::vector<std::size_t>{2});
    const auto more = sample_keypoints(s, 3, 3);
    CHECK(more.indices == std::vector<std::size_t>{2});
    CHECK(more.shortfall == 2);
  }
  SUBCASE("all zero scores") {
    auto s = ScoreSet::from_detection(Level::kHigh, {0, 0, 0});
    try {
      sample_keypoints(s, 1, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDegenerateScores);
    }
  }
  SUBCASE("unique indices, no zero-score picks, deterministic") {
    std::mt19937_64 rng(52);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> w(300);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = i % 4 == 0 ? 0.0 : u(rng);
    const auto s = ScoreSet::from_detection(Level::kLow, w);
    const auto a = sample_keypoints(s, 100, 9);
    const auto b = sample_keypoints(s, 100, 9);
    CHECK(a.indices == b.indices);
    auto sorted = a.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (auto i : a.indices) CHECK(w[i] > 0.0);
    CHECK(a.sample_seed == 9);
  }
  SUBCASE("scaling the scores leaves the sample unchanged") {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> u(0.01, 1);
    std::vector<double> w(200);
    for (auto& v : w) v = u(rng);
    for (double c : {0.5, 0.37, 0.9}) {
      std::vector<double> scaled = w;
      for (auto& v : scaled) v *= c;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CHECK(sample_keypoints(ScoreSet::from_detection(Level::kLow, w), 50, seed).indices ==
              sample_keypoints(ScoreSet::from_detection(Level::kLow, scaled), 50, seed).indices);
      }
    }
  }
}

TEST_CASE("sample_keypoints frequencies follow the scores") {
  const int trials = 10000;
  SUBCASE("uniform scores") {
    const auto s = ScoreSet::from_detection(Level::kHigh, std::vector<double>(8, 0.6));
    std::vector<int> hits(8);
    for (int t = 0; t < trials; ++t) ++hits[sample_keypoints(s, 1, t).indices[0]];
    const double p = 1.0 / 8, sigma = std::sqrt(p * (1 - p) / trials);
    for (int h : hits) CHECK(std::abs(h / double(trials) - p) <= 3 * sigma);
  }
  SUBCASE("0.9 / 0.1 split") {
    const auto s = ScoreSet::from_detection(Level::kHigh, {0.9, 0.1, 0, 0, 0});
    int zero = 0;
    for (int t = 0; t < trials; ++t) zero += sample_keypoints(s, 1, t).indices[0] == 0;
    const double sigma = std::sqrt(0.9 * 0.1 / trials);
    CHECK(std::abs(zero / double(trials) - 0.9) <= 3 * sigma);
  }
}
