#include "doctest.h"

#include <map>
#include <set>

#include "hireg/errors.hpp"
#include "hireg/matching.hpp"
#include "hireg/metrics.hpp"
#include "hireg/scene.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hireg;

namespace {

DescriptorSet random_rows(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(n * dim);
  for (auto& x : v) x = g(rng);
  return DescriptorSet(Level::kLow, dim, v);
}

double d2(const DescriptorSet& a, std::size_t i, const DescriptorSet& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) s += std::pow(a.row(i)[k] - b.row(j)[k], 2);
  return s;
}

std::size_t argmin_row(const DescriptorSet& a, std::size_t i, const DescriptorSet& b) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < b.size(); ++j) {
    if (d2(a, i, b, j) < d2(a, i, b, best)) best = j;
  }
  return best;
}

std::set<std::pair<std::size_t, std::size_t>> as_set(const CorrespondenceSet& c) {
  std::set<std::pair<std::size_t, std::size_t>> s;
  for (const auto& p : c.pairs) s.insert({p.source, p.target});
  return s;
}

}  // namespace

TEST_CASE("match_features") {
  std::mt19937_64 rng(60);
  SUBCASE("identical sets pair with themselves") {
    const auto d = random_rows(rng, 40, 6);
    const auto m = match_features(d, d, true);
    REQUIRE(m.size() == 40);
    for (std::size_t i = 0; i < 40; ++i) {
      CHECK(m.pairs[i].source == i);
      CHECK(m.pairs[i].target == i);
      CHECK(m.pairs[i].weight == 1.0);
    }
  }
  SUBCASE("swapped unit vectors") {
    const DescriptorSet a(Level::kHigh, 2, std::vector<double>{1, 0, 0, 1});
    const DescriptorSet b(Level::kHigh, 2, std::vector<double>{0, 1, 1, 0});
    const auto m = match_features(a, b, true);
    CHECK(as_set(m) == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 0}});
  }
  SUBCASE("random sets equal the all-pairs argmin") {
    for (int t = 0; t < 10; ++t) {
      const auto a = random_rows(rng, 60, 5);
      const auto b = random_rows(rng, 45, 5);
      std::set<std::pair<std::size_t, std::size_t>> one_way, mutual;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t j = argmin_row(a, i, b);
        one_way.insert({i, j});
        if (argmin_row(b, j, a) == i) mutual.insert({i, j});
      }
      CHECK(as_set(match_features(a, b, false)) == one_way);
      CHECK(as_set(match_features(a, b, true)) == mutual);
    }
  }
  SUBCASE("invalid input") {
    const auto a = random_rows(rng, 3, 4);
    CHECK_THROWS_AS(match_features(a, DescriptorSet(Level::kLow, 0, 4), true), ValidationError);
    CHECK_THROWS_AS(match_features(a, random_rows(rng, 3, 5), true), ValidationError);
  }
}

TEST_CASE("weighted_svd") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> uw(0.1, 2.0);
  SUBCASE("identity") {
    const auto c = test::random_cloud(rng, 20);
    const std::vector<double> w(20, 1.0);
    const auto t = weighted_svd(c.points, c.points, w);
    CHECK((t.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(t.translation.norm() < 1e-9);
  }
  SUBCASE("exact fits") {
    for (int k = 0; k < 200; ++k) {
      const auto c = test::random_cloud(rng, 3 + k % 20);
      const auto gt = test::random_rigid(rng, 5.0);
      const auto moved = apply_transform(c, gt);
      std::vector<double> w(c.size());
      for (auto& x : w) x = uw(rng);
      const auto t = weighted_svd(c.points, moved.points, w);
      CHECK(is_valid(t));
      CHECK((t.rotation - gt.rotation).norm() < 1e-9);
      CHECK((t.translation - gt.translation).norm() < 1e-9);
    }
  }
  SUBCASE("noisy fits match the quaternion solution and are locally optimal") {
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int k = 0; k < 20; ++k) {
      const auto c = test::random_cloud(rng, 30);
      const auto gt = test::random_rigid(rng);
      auto moved = apply_transform(c, gt);
      for (auto& p : moved.points) p += Vec3(noise(rng), noise(rng), noise(rng));
      std::vector<double> w(c.size());
      for (auto& x : w) x = uw(rng);
      const auto t = weighted_svd(c.points, moved.points, w);
      const auto h = test::horn_fit(c.points, moved.points, w);
      CHECK((t.rotation - h.rotation).norm() < 1e-9);
      CHECK((t.translation - h.translation).norm() < 1e-9);
      const double best = test::weighted_residual(t, c.points, moved.points, w);
      std::normal_distribution<double> small(0.0, 1e-3);
      for (int p = 0; p < 1000; ++p) {
        const auto d = rotation_about_axis(Vec3(small(rng), small(rng), small(rng)).normalized(),
                                           std::abs(small(rng)),
                                           Vec3(small(rng), small(rng), small(rng)));
        CHECK(test::weighted_residual(compose(d, t), c.points, moved.points, w) >= best);
      }
    }
  }
  SUBCASE("weight scale invariance") {
    const auto c = test::random_cloud(rng, 15);
    auto moved = apply_transform(c, test::random_rigid(rng));
    for (auto& p : moved.points) p.x() += 0.01 * p.y();
    std::vector<double> w(15), w2(15);
    for (std::size_t i = 0; i < 15; ++i) {
      w[i] = uw(rng);
      w2[i] = 37.5 * w[i];
    }
    const auto a = weighted_svd(c.points, moved.points, w);
    const auto b = weighted_svd(c.points, moved.points, w2);
    CHECK((a.rotation - b.rotation).norm() < 1e-9);
    CHECK((a.translation - b.translation).norm() < 1e-9);
  }
  SUBCASE("degenerate and invalid input") {
    std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    const std::vector<double> w(4, 1.0);
    try {
      weighted_svd(line, line, w);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDegenerateGeometry);
    }
    const auto c = test::random_cloud(rng, 4);
    CHECK_THROWS_AS(weighted_svd(c.points, c.points, std::vector<double>{1, -1, 1, 1}), ValidationError);
    CHECK_THROWS_AS(weighted_svd(c.points, c.points, std::vector<double>(4, 0.0)), ValidationError);
    CHECK_THROWS_AS(weighted_svd(std::span(c.points).first(2), std::span(c.points).first(2),
                                 std::vector<double>(2, 1.0)),
                    ValidationError);
  }
}

namespace {

struct Synthetic {
  PointCloud src, tgt;
  CorrespondenceSet corr;
  RigidTransform gt;
};

Synthetic synthetic_correspondences(std::uint64_t seed, std::size_t n, double inlier_fraction,
                                    double noise) {
  std::mt19937_64 rng(seed);
  Synthetic s;
  s.gt = test::random_rigid(rng);
  s.src = test::random_cloud(rng, n, -1.0, 1.0);
  std::normal_distribution<double> g(0.0, noise);
  const std::size_t inliers = static_cast<std::size_t>(inlier_fraction * n);
  const auto junk = test::random_cloud(rng, n, -2.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.tgt.points.push_back(i < inliers ? Vec3(s.gt(s.src[i]) + Vec3(g(rng), g(rng), g(rng)))
                                       : junk[i]);
    s.corr.pairs.push_back({i, i, 1.0});
  }
  return s;
}

}  // namespace

TEST_CASE("ransac_transform") {
  SUBCASE("noiseless consistent correspondences") {
    const auto s = synthetic_correspondences(70, 50, 1.0, 0.0);
    const auto r = ransac_transform(s.src, s.tgt, s.corr, RansacParams{});
    CHECK(test::angle_between(r.transform.rotation, s.gt.rotation) < 1e-6);
    CHECK((r.transform.translation - s.gt.translation).norm() < 1e-6);
    CHECK(r.inlier_count == 50);
  }
  SUBCASE("40% inliers") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = synthetic_correspondences(100 + seed, 200, 0.4, 0.005);
      RansacParams p;
      p.max_iterations = 1000;
      p.seed = seed;
      const auto r = ransac_transform(s.src, s.tgt, s.corr, p);
      ok += rotation_error(r.transform, s.gt) < 0.5 && translation_error(r.transform, s.gt) < 0.02;
    }
    CHECK(ok == 10);
  }
  SUBCASE("the inlier mask is exactly the residual test") {
    const auto s = synthetic_correspondences(71, 150, 0.5, 0.02);
    RansacParams p;
    p.seed = 3;
    const auto r = ransac_transform(s.src, s.tgt, s.corr, p);
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.corr.size(); ++i) {
      const bool in = (r.transform(s.src[i]) - s.tgt[i]).norm() <= p.inlier_threshold;
      CHECK(r.inliers[i] == in);
      count += in;
    }
    CHECK(count == r.inlier_count);
    CHECK(r.inlier_count <= s.corr.size());
  }
  SUBCASE("deterministic given the seed") {
    const auto s = synthetic_correspondences(72, 100, 0.3, 0.01);
    RansacParams p;
    p.seed = 11;
    const auto a = ransac_transform(s.src, s.tgt, s.corr, p);
    const auto b = ransac_transform(s.src, s.tgt, s.corr, p);
    CHECK(a.transform.rotation == b.transform.rotation);
    CHECK(a.transform.translation == b.transform.translation);
    CHECK(a.iterations == b.iterations);
  }
  SUBCASE("all outliers with a tight threshold") {
    const auto s = synthetic_correspondences(73, 5, 0.0, 0.0);
    RansacParams p;
    p.inlier_threshold = 1e-4;
    try {
      ransac_transform(s.src, s.tgt, s.corr, p);
      FAIL("expected an error");
    } catch (const NoConsensusError& e) {
      CHECK(e.best_inliers() < 3);
      CHECK(e.best_mean_residual() > 0.0);
    }
  }
  SUBCASE("too few pairs and bad parameters") {
    const auto s = synthetic_correspondences(74, 2, 1.0, 0.0);
    CHECK_THROWS_AS(ransac_transform(s.src, s.tgt, s.corr, RansacParams{}), NoConsensusError);
    RansacParams p;
    p.sample_size = 2;
    CHECK_THROWS_AS(validate(p), ValidationError);
    p = {};
    p.confidence = 1.0;
    CHECK_THROWS_AS(validate(p), ValidationError);
  }
}

TEST_CASE("local_cell_match") {
  std::mt19937_64 rng(75);
  SUBCASE("single-point cells") {
    PointCloud a, b;
    a.points.emplace_back(0, 0, 0);
    a.points.emplace_back(1, 0, 0);
    b.points.emplace_back(5, 5, 5);
    b.points.emplace_back(7, 5, 5);
    const DescriptorSet da(Level::kLow, 2, std::vector<double>{1, 0, 0, 1});
    const DescriptorSet db(Level::kLow, 2, std::vector<double>{1, 0, 0, 1});
    const auto m = local_cell_match(a, b, SpatialIndex(a), SpatialIndex(b), {0, 0, 1.0}, da, db, 0.1);
    REQUIRE(m.size() == 1);
    CHECK(m.pairs[0] == Correspondence{0, 0, 1.0});
  }
  SUBCASE("duplicated patch reproduces the ground-truth map") {
    const auto patch = test::random_cloud(rng, 200, 0.0, 0.3);
    const auto gt = test::random_rigid(rng);
    // Target is a shuffled, transformed copy.
    std::vector<std::size_t> perm(200);
    for (std::size_t i = 0; i < 200; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    PointCloud tgt;
    const auto desc = random_rows(rng, 200, 8);
    std::vector<double> tgt_rows(200 * 8);
    for (std::size_t j = 0; j < 200; ++j) {
      tgt.points.push_back(gt(patch[perm[j]]));
      std::copy_n(desc.row(perm[j]).begin(), 8, tgt_rows.begin() + j * 8);
    }
    const DescriptorSet tdesc(Level::kLow, 8, tgt_rows);
    std::size_t center_t = 0;
    while (perm[center_t] != 7) ++center_t;
    const auto m = local_cell_match(patch, tgt, SpatialIndex(patch), SpatialIndex(tgt),
                                    {7, center_t, 1.0}, desc, tdesc, 0.12);
    CHECK(m.size() > 5);
    for (const auto& p : m.pairs) CHECK(perm[p.target] == p.source);
  }
  SUBCASE("random patches equal brute-force mutual matching inside the cells") {
    for (int t = 0; t < 10; ++t) {
      const auto a = test::random_cloud(rng, 300, 0, 0.5);
      const auto b = test::random_cloud(rng, 300, 0, 0.5);
      const auto da = random_rows(rng, 300, 4);
      const auto db = random_rows(rng, 300, 4);
      std::vector<double> det(300);
      for (auto& v : det) v = std::uniform_real_distribution<double>(0, 1)(rng);
      const Correspondence cp{static_cast<std::size_t>(t), static_cast<std::size_t>(2 * t), 1.0};
      const double r = 0.15;
      const auto m = local_cell_match(a, b, SpatialIndex(a), SpatialIndex(b), cp, da, db, r, det);
      const auto ca = test::brute_radius(a, a[cp.source], r);
      const auto cb = test::brute_radius(b, b[cp.target], r);
      std::map<std::pair<std::size_t, std::size_t>, double> want;
      for (auto i : ca) {
        std::size_t best = cb[0];
        for (auto j : cb) if (d2(da, i, db, j) < d2(da, i, db, best)) best = j;
        std::size_t back = ca[0];
        for (auto k : ca) if (d2(db, best, da, k) < d2(db, best, da, back)) back = k;
        if (back == i) want[{i, best}] = det[i];
      }
      std::map<std::pair<std::size_t, std::size_t>, double> got;
      for (const auto& p : m.pairs) got[{p.source, p.target}] = p.weight;
      CHECK(got == want);
    }
  }
  SUBCASE("isolated centers and invalid input") {
    PointCloud a, b;
    a.points.emplace_back(0, 0, 0);
    b.points.emplace_back(1, 1, 1);
    const DescriptorSet d(Level::kLow, 1, std::vector<double>{1});
    const auto m = local_cell_match(a, b, SpatialIndex(a), SpatialIndex(b), {0, 0, 1.0}, d, d, 0.1);
    CHECK(m.size() == 1);
    CHECK_THROWS_AS(local_cell_match(a, b, SpatialIndex(a), SpatialIndex(b), {0, 0, 1.0}, d, d, 0.0),
                    ValidationError);
    CHECK_THROWS_AS(local_cell_match(a, b, SpatialIndex(a), SpatialIndex(b), {1, 0, 1.0}, d, d, 0.1),
                    ValidationError);
  }
}

TEST_CASE("select_fine_subset") {
  std::mt19937_64 rng(76);
  SUBCASE("fraction one keeps everything") {
    const auto s = ScoreSet::from_detection(Level::kLow, {0.2, 0.9, 0.5});
    CorrespondenceSet c;
    c.pairs = {{0, 4, 1}, {1, 5, 1}, {2, 6, 1}};
    const auto out = select_fine_subset(c, s, 1.0);
    CHECK(as_set(out) == as_set(c));
  }
  SUBCASE("top half of four") {
    const auto s = ScoreSet::from_detection(Level::kLow, {0.2, 0.9, 0.5, 0.7});
    CorrespondenceSet c;
    c.pairs = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}};
    const auto out = select_fine_subset(c, s, 0.5);
    REQUIRE(out.size() == 2);
    CHECK(out.pairs[0] == Correspondence{1, 1, 0.9});
    CHECK(out.pairs[1] == Correspondence{3, 3, 0.7});
  }
  SUBCASE("random input equals sort then prefix") {
    for (int t = 0; t < 20; ++t) {
      std::vector<double> det(50);
      for (auto& v : det) v = std::round(std::uniform_real_distribution<double>(0, 10)(rng)) / 10;
      const auto s = ScoreSet::from_detection(Level::kLow, det);
      CorrespondenceSet c;
      for (int k = 0; k < 40; ++k) c.pairs.push_back({rng() % 50, rng() % 50, 1.0});
      const double frac = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
      auto sorted = c.pairs;
      std::stable_sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
        return std::make_tuple(-det[a.source], a.source, a.target) <
               std::make_tuple(-det[b.source], b.source, b.target);
      });
      const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frac * 40 - 1e-9)));
      sorted.resize(keep);
      for (auto& p : sorted) p.weight = det[p.source];
      CHECK(select_fine_subset(c, s, frac).pairs == sorted);
    }
  }
  SUBCASE("ceil is exact for representable products") {
    const auto s = ScoreSet::from_detection(Level::kLow, std::vector<double>(10, 0.5));
    CorrespondenceSet c;
    for (std::size_t i = 0; i < 10; ++i) c.pairs.push_back({i, i, 1.0});
    CHECK(select_fine_subset(c, s, 0.3).size() == 3);
    CHECK(select_fine_subset(c, s, 0.31).size() == 4);
  }
  SUBCASE("empty input and bad fraction") {
    const auto s = ScoreSet::from_detection(Level::kLow, {0.5});
    CHECK(select_fine_subset(CorrespondenceSet{}, s, 0.5).empty());
    CHECK_THROWS_AS(select_fine_subset(CorrespondenceSet{}, s, 0.0), ValidationError);
    CHECK_THROWS_AS(select_fine_subset(CorrespondenceSet{}, s, 1.5), ValidationError);
  }
}

TEST_CASE("deduplicate keeps the highest weight") {
  CorrespondenceSet c;
  c.pairs = {{1, 2, 0.3}, {0, 1, 0.5}, {1, 2, 0.8}, {1, 2, 0.1}};
  const auto d = deduplicate(c);
  REQUIRE(d.size() == 2);
  CHECK(d.pairs[0] == Correspondence{0, 1, 0.5});
  CHECK(d.pairs[1] == Correspondence{1, 2, 0.8});
}

TEST_CASE("register_clouds") {
  SceneSpec spec;
  spec.seed = 77;
  const auto scene = generate_scene(spec);
  RegistrationConfig cfg;
  cfg.seed = 5;

  SUBCASE("identity problem") {
    const auto r = register_clouds(scene.src, scene.src, cfg);
    CHECK((r.transform.rotation - Mat3::Identity()).norm() < 1e-6);
    CHECK(r.transform.translation.norm() < 1e-6);
    for (const auto& p : r.fine.pairs) CHECK(p.source == p.target);
  }
  SUBCASE("synthetic pair registers and is deterministic") {
    const auto a = register_clouds(scene.src, scene.tgt, cfg);
    const auto b = register_clouds(scene.src, scene.tgt, cfg);
    CHECK(a.transform.rotation == b.transform.rotation);
    CHECK(a.transform.translation == b.transform.translation);
    CHECK(a.fine.pairs == b.fine.pairs);
    CHECK(is_valid(a.transform));
    CHECK(a.inlier_count <= a.coarse.size());
    CHECK(rotation_error(a.transform, scene.gt) < 5.0);
    CHECK(translation_error(a.transform, scene.gt) < 0.1);
    CHECK_FALSE(a.fine_fallback);
    CHECK(a.coarse.stage == Stage::kCoarse);
    CHECK(a.fine.stage == Stage::kFine);
  }
  SUBCASE("zero overlap fails at the coarse stage") {
    std::mt19937_64 rng(78);
    const auto noise = test::random_cloud(rng, 3000, 3.0, 4.0);
    try {
      register_clouds(scene.src, noise, cfg);
      FAIL("expected an error");
    } catch (const StageError& e) {
      CHECK(e.kind() == ErrorKind::kNoConsensus);
      CHECK(e.stage() == "coarse");
    }
  }
  SUBCASE("invalid input") {
    CHECK_THROWS_AS(register_clouds(PointCloud{}, scene.tgt, cfg), ValidationError);
    auto bad = cfg;
    bad.matching.top_fraction = 0.0;
    CHECK_THROWS_AS(register_clouds(scene.src, scene.tgt, bad), ValidationError);
  }
}
