#include "hireg/matching.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>

#include "hireg/errors.hpp"
#include "hireg/kernels.hpp"
#include "hireg/parallel.hpp"
#include "hireg/random.hpp"

namespace hireg {
namespace {

bool is_zero_row(const DescriptorSet& d, std::size_t i) {
  const auto row = d.row(i);
  return std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
}

}  // namespace

CorrespondenceSet match_features(const DescriptorSet& src, const DescriptorSet& tgt,
                                 bool mutual) {
  if (src.size() == 0 || tgt.size() == 0) {
    throw ValidationError("match_features: empty descriptor set");
  }
  if (src.dim() != tgt.dim()) throw ValidationError("match_features: dimension mismatch");
  const auto& k = kernels::active();
  const std::size_t dim = src.dim();

  std::vector<std::size_t> fwd(src.size());
  parallel_for(src.size(), [&](std::size_t i) {
    fwd[i] = k.nearest_row(src.row(i).data(), tgt.data().data(), tgt.size(), dim).index;
  });
  std::vector<std::size_t> bwd;
  if (mutual) {
    bwd.resize(tgt.size());
    parallel_for(tgt.size(), [&](std::size_t j) {
      bwd[j] = k.nearest_row(tgt.row(j).data(), src.data().data(), src.size(), dim).index;
    });
  }
  CorrespondenceSet out;
  out.stage = Stage::kCoarse;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (mutual && bwd[fwd[i]] != i) continue;
    out.pairs.push_back({i, fwd[i], 1.0});
  }
  return out;
}

RigidTransform weighted_svd(std::span<const Vec3> src, std::span<const Vec3> tgt,
                            std::span<const double> weights) {
  if (src.size() != tgt.size() || src.size() != weights.size()) {
    throw ValidationError("weighted_svd: point and weight counts differ");
  }
  if (src.size() < 3) throw ValidationError("weighted_svd needs at least 3 pairs");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("weighted_svd: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("weighted_svd: weights sum to zero");

  Vec3 cs = Vec3::Zero();
  Vec3 ct = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    cs += w * src[i];
    ct += w * tgt[i];
  }
  Mat3 h = Mat3::Zero();
  Mat3 ss = Mat3::Zero();
  Mat3 st = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    const Vec3 a = src[i] - cs;
    const Vec3 b = tgt[i] - ct;
    h.noalias() += w * a * b.transpose();
    ss.noalias() += w * a * a.transpose();
    st.noalias() += w * b * b.transpose();
  }
  const auto degenerate = [](const Mat3& scatter) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter, Eigen::EigenvaluesOnly);
    const Vec3 ev = es.eigenvalues();
    return !(ev[2] > 0.0) || !(ev[1] > 1e-12 * ev[2]);
  };
  if (degenerate(ss) || degenerate(st)) {
    throw Error(ErrorKind::kDegenerateGeometry,
                "weighted_svd: collinear or coincident point configuration");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = v * d * u.transpose();
  out.translation = ct - out.rotation * cs;
  return out;
}

void validate(const RansacParams& p) {
  if (p.sample_size < 3) throw ValidationError("RANSAC sample_size must be >= 3");
  if (!(p.confidence > 0.0 && p.confidence < 1.0)) {
    throw ValidationError("RANSAC confidence must lie in (0, 1)");
  }
  if (!(p.inlier_threshold > 0.0)) throw ValidationError("RANSAC inlier_threshold must be > 0");
  if (p.max_iterations == 0) throw ValidationError("RANSAC max_iterations must be >= 1");
}

namespace {

std::size_t count_inliers(const RigidTransform& t, std::span<const Vec3> s,
                          std::span<const Vec3> q, double thr2, std::vector<bool>* mask) {
  std::size_t n = 0;
  if (mask) mask->assign(s.size(), false);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((t(s[i]) - q[i]).squaredNorm() <= thr2) {
      ++n;
      if (mask) (*mask)[i] = true;
    }
  }
  return n;
}

std::size_t required_iterations(std::size_t inliers, std::size_t total,
                                std::size_t sample_size, double confidence,
                                std::size_t cap) {
  const double w = static_cast<double>(inliers) / static_cast<double>(total);
  const double p_good = std::pow(w, static_cast<double>(sample_size));
  if (p_good >= 1.0) return 1;
  if (p_good <= 0.0) return cap;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n >= static_cast<double>(cap)) return cap;
  return static_cast<std::size_t>(std::ceil(n));
}

}  // namespace

RansacResult ransac_transform(const PointCloud& src, const PointCloud& tgt,
                              const CorrespondenceSet& corr, const RansacParams& params) {
  validate(params);
  const std::size_t n = corr.size();
  if (n < params.sample_size) {
    throw NoConsensusError("RANSAC needs at least sample_size correspondences (have " +
                               std::to_string(n) + ")",
                           0, 0.0);
  }
  std::vector<Vec3> s(n), q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = corr.pairs[i];
    if (c.source >= src.size() || c.target >= tgt.size()) {
      throw ValidationError("RANSAC: correspondence index out of range");
    }
    s[i] = src[c.source];
    q[i] = tgt[c.target];
  }
  const double thr2 = params.inlier_threshold * params.inlier_threshold;
  const std::vector<double> unit(params.sample_size, 1.0);

  Rng rng(mix_seed(params.seed, 0x7261));
  std::vector<std::size_t> pick(params.sample_size);
  std::vector<Vec3> ps(params.sample_size), pq(params.sample_size);
  RigidTransform best;
  std::size_t best_count = 0;
  std::size_t required = params.max_iterations;
  std::size_t iter = 0;
  while (iter < std::min(required, params.max_iterations)) {
    ++iter;
    for (std::size_t k = 0; k < params.sample_size; ++k) {
      bool fresh;
      do {
        pick[k] = static_cast<std::size_t>(uniform_index(rng, n));
        fresh = std::find(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k),
                          pick[k]) == pick.begin() + static_cast<std::ptrdiff_t>(k);
      } while (!fresh);
      ps[k] = s[pick[k]];
      pq[k] = q[pick[k]];
    }
    RigidTransform model;
    try {
      model = weighted_svd(ps, pq, unit);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDegenerateGeometry) continue;
      throw;
    }
    const std::size_t count = count_inliers(model, s, q, thr2, nullptr);
    if (count > best_count) {
      best_count = count;
      best = model;
      required = required_iterations(count, n, params.sample_size, params.confidence,
                                     params.max_iterations);
    }
  }

  if (best_count < params.sample_size) {
    double mean_residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_residual += (best(s[i]) - q[i]).norm();
    throw NoConsensusError("RANSAC found no model with at least " +
                               std::to_string(params.sample_size) + " inliers (best " +
                               std::to_string(best_count) + " of " + std::to_string(n) +
                               ")",
                           best_count, mean_residual / static_cast<double>(n));
  }

  RansacResult out;
  out.iterations = iter;
  out.transform = best;
  out.inlier_count = count_inliers(best, s, q, thr2, &out.inliers);
  // Refit on the consensus set while it does not shrink.
  for (int round = 0; round < 5; ++round) {
    std::vector<Vec3> is, iq;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.inliers[i]) {
        is.push_back(s[i]);
        iq.push_back(q[i]);
      }
    }
    RigidTransform refit;
    try {
      refit = weighted_svd(is, iq, std::vector<double>(is.size(), 1.0));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDegenerateGeometry) break;
      throw;
    }
    std::vector<bool> mask;
    const std::size_t count = count_inliers(refit, s, q, thr2, &mask);
    if (count < out.inlier_count) break;
    const bool same = mask == out.inliers;
    out.transform = refit;
    out.inliers = std::move(mask);
    out.inlier_count = count;
    if (same) break;
  }
  return out;
}

CorrespondenceSet local_cell_match(const PointCloud& src, const PointCloud& tgt,
                                   const SpatialIndex& src_index,
                                   const SpatialIndex& tgt_index,
                                   const Correspondence& coarse_pair,
                                   const DescriptorSet& src_low,
                                   const DescriptorSet& tgt_low, double cell_radius,
                                   std::span<const double> src_detection,
                                   const RigidTransform* coarse) {
  if (!(cell_radius > 0.0)) throw ValidationError("local_cell_match: cell_radius must be > 0");
  if (coarse_pair.source >= src.size() || coarse_pair.target >= tgt.size()) {
    throw ValidationError("local_cell_match: coarse pair index out of range");
  }
  if (!src_detection.empty() && src_detection.size() != src.size()) {
    throw ValidationError("local_cell_match: detection score count differs from cloud size");
  }
  CorrespondenceSet out;
  out.stage = Stage::kFine;
  auto src_cell = src_index.radius_query(src[coarse_pair.source], cell_radius);
  auto tgt_cell = tgt_index.radius_query(tgt[coarse_pair.target], cell_radius);
  if (coarse) {
    const double r2 = cell_radius * cell_radius;
    const RigidTransform back = invert(*coarse);
    const Vec3 src_center = src[coarse_pair.source];
    const Vec3 tgt_center = tgt[coarse_pair.target];
    std::erase_if(src_cell, [&](std::size_t i) { return ((*coarse)(src[i]) - tgt_center).squaredNorm() > r2; });
    std::erase_if(tgt_cell, [&](std::size_t j) { return (back(tgt[j]) - src_center).squaredNorm() > r2; });
  }
  if (src_cell.empty() || tgt_cell.empty()) return out;

  const auto local = match_features(src_low.subset(src_cell), tgt_low.subset(tgt_cell), true);
  out.pairs.reserve(local.size());
  for (const auto& p : local.pairs) {
    const std::size_t s = src_cell[p.source];
    out.pairs.push_back({s, tgt_cell[p.target], src_detection.empty() ? 1.0 : src_detection[s]});
  }
  return out;
}

CorrespondenceSet select_fine_subset(const CorrespondenceSet& all_fine,
                                     const ScoreSet& scores_low, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw ValidationError("select_fine_subset: top_fraction must lie in (0, 1]");
  }
  CorrespondenceSet out;
  out.stage = Stage::kFine;
  if (all_fine.empty()) return out;
  const auto& det = scores_low.detection();
  for (const auto& p : all_fine.pairs) {
    if (p.source >= det.size()) throw ValidationError("select_fine_subset: source index out of range");
  }
  out.pairs = all_fine.pairs;
  std::sort(out.pairs.begin(), out.pairs.end(), [&](const Correspondence& a, const Correspondence& b) {
    if (det[a.source] != det[b.source]) return det[a.source] > det[b.source];
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
  });
  const double want = top_fraction * static_cast<double>(out.pairs.size());
  auto keep = static_cast<std::size_t>(std::ceil(want - 1e-9 * want));
  keep = std::clamp<std::size_t>(keep, 1, out.pairs.size());
  out.pairs.resize(keep);
  for (auto& p : out.pairs) p.weight = det[p.source];
  return out;
}

CorrespondenceSet deduplicate(const CorrespondenceSet& pairs) {
  std::map<std::pair<std::size_t, std::size_t>, double> best;
  for (const auto& p : pairs.pairs) {
    auto [it, inserted] = best.emplace(std::make_pair(p.source, p.target), p.weight);
    if (!inserted) it->second = std::max(it->second, p.weight);
  }
  CorrespondenceSet out;
  out.stage = pairs.stage;
  out.pairs.reserve(best.size());
  for (const auto& [key, w] : best) out.pairs.push_back({key.first, key.second, w});
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const NoConsensusError& e) {
    throw StageError(e, stage);
  } catch (const Error& e) {
    throw StageError(e, stage);
  }
}

struct LevelScores {
  ScoreSet low;
  ScoreSet high;
};

}  // namespace

RegistrationResult register_clouds(const PointCloud& src, const PointCloud& tgt,
                                   const RegistrationConfig& config) {
  validate(src);
  validate(tgt);
  validate(config.descriptors);
  validate(config.ransac);
  const auto& mp = config.matching;
  if (mp.coarse_samples == 0) throw ValidationError("coarse_samples must be >= 1");
  if (!(mp.cell_radius > 0.0)) throw ValidationError("cell_radius must be > 0");
  if (!(mp.top_fraction > 0.0 && mp.top_fraction <= 1.0)) {
    throw ValidationError("top_fraction must lie in (0, 1]");
  }

  RegistrationResult result;
  const auto t_start = Clock::now();

  // Descriptors at both levels, sharing index and normals per cloud.
  auto t0 = Clock::now();
  const SpatialIndex src_index(src);
  const SpatialIndex tgt_index(tgt);
  const auto src_normals = estimate_normals(src, src_index, config.descriptors.normal_radius);
  const auto tgt_normals = estimate_normals(tgt, tgt_index, config.descriptors.normal_radius);
  const auto src_low = compute_descriptors(src, src_index, src_normals, Level::kLow, config.descriptors);
  const auto src_high = compute_descriptors(src, src_index, src_normals, Level::kHigh, config.descriptors);
  const auto tgt_low = compute_descriptors(tgt, tgt_index, tgt_normals, Level::kLow, config.descriptors);
  const auto tgt_high = compute_descriptors(tgt, tgt_index, tgt_normals, Level::kHigh, config.descriptors);
  result.timings.descriptors_ms = ms_since(t0);

  // Detection scores = saliency (matchability stand-in) x overlap.
  t0 = Clock::now();
  const auto scores = in_stage("detection", [&] {
    const auto src_overlap = score_overlap_heuristic(src_high, tgt_high);
    const auto tgt_overlap = score_overlap_heuristic(tgt_high, src_high);
    const std::size_t k = mp.saliency_k;
    return std::pair<LevelScores, LevelScores>{
        {ScoreSet(Level::kLow, score_saliency(src, src_low, src_index, k), src_overlap),
         ScoreSet(Level::kHigh, score_saliency(src, src_high, src_index, k), src_overlap)},
        {ScoreSet(Level::kLow, score_saliency(tgt, tgt_low, tgt_index, k), tgt_overlap),
         ScoreSet(Level::kHigh, score_saliency(tgt, tgt_high, tgt_index, k), tgt_overlap)}};
  });
  const auto& [src_scores, tgt_scores] = scores;
  result.timings.detection_ms = ms_since(t0);

  // Global phase: high-level keypoints, feature matching, RANSAC.
  t0 = Clock::now();
  result.src_keypoints = in_stage("coarse", [&] {
    return sample_keypoints(src_scores.high, mp.coarse_samples, mix_seed(config.seed, 1));
  });
  result.tgt_keypoints = in_stage("coarse", [&] {
    return sample_keypoints(tgt_scores.high, mp.coarse_samples, mix_seed(config.seed, 2));
  });
  const auto& kp_s = result.src_keypoints.indices;
  const auto& kp_t = result.tgt_keypoints.indices;
  const auto kp_matches = match_features(src_high.subset(kp_s), tgt_high.subset(kp_t), mp.mutual);
  result.coarse.stage = Stage::kCoarse;
  for (const auto& p : kp_matches.pairs) {
    const std::size_t i = kp_s[p.source], j = kp_t[p.target];
    if (is_zero_row(src_high, i) || is_zero_row(tgt_high, j)) continue;
    result.coarse.pairs.push_back({i, j, 1.0});
  }
  RansacParams ransac = config.ransac;
  ransac.seed = mix_seed(config.seed ^ config.ransac.seed, 3);
  const auto coarse_fit =
      in_stage("coarse", [&] { return ransac_transform(src, tgt, result.coarse, ransac); });
  if (coarse_fit.inlier_count < mp.min_coarse_inliers) {
    throw StageError(NoConsensusError("coarse consensus of " + std::to_string(coarse_fit.inlier_count) +
                                          " pairs is below min_coarse_inliers (" +
                                          std::to_string(mp.min_coarse_inliers) + ")",
                                      coarse_fit.inlier_count, 0.0),
                     "coarse");
  }
  result.coarse_transform = coarse_fit.transform;
  result.coarse_inliers = coarse_fit.inliers;
  result.inlier_count = coarse_fit.inlier_count;
  result.iterations_used = coarse_fit.iterations;
  result.timings.coarse_ms = ms_since(t0);

  // Local phase: low-level matching in cells around each coarse inlier.
  t0 = Clock::now();
  std::vector<Correspondence> anchors;
  for (std::size_t i = 0; i < result.coarse.size(); ++i) {
    if (coarse_fit.inliers[i]) anchors.push_back(result.coarse.pairs[i]);
  }

  // Optionally restrict the cells to sampled low-level keypoints.
  const PointCloud* cell_src = &src;
  const PointCloud* cell_tgt = &tgt;
  const SpatialIndex* cell_src_index = &src_index;
  const SpatialIndex* cell_tgt_index = &tgt_index;
  const DescriptorSet* cell_src_low = &src_low;
  const DescriptorSet* cell_tgt_low = &tgt_low;
  std::vector<double> cell_src_det = src_scores.low.detection();
  std::vector<std::size_t> src_map, tgt_map;
  PointCloud sub_src, sub_tgt;
  std::optional<SpatialIndex> sub_src_index, sub_tgt_index;
  DescriptorSet sub_src_low, sub_tgt_low;
  if (mp.fine_samples > 0) {
    src_map = in_stage("fine", [&] {
      return sample_keypoints(src_scores.low, mp.fine_samples, mix_seed(config.seed, 4)).indices;
    });
    tgt_map = in_stage("fine", [&] {
      return sample_keypoints(tgt_scores.low, mp.fine_samples, mix_seed(config.seed, 5)).indices;
    });
    std::sort(src_map.begin(), src_map.end());
    std::sort(tgt_map.begin(), tgt_map.end());
    for (auto i : src_map) sub_src.points.push_back(src[i]);
    for (auto j : tgt_map) sub_tgt.points.push_back(tgt[j]);
    sub_src_index.emplace(sub_src);
    sub_tgt_index.emplace(sub_tgt);
    sub_src_low = src_low.subset(src_map);
    sub_tgt_low = tgt_low.subset(tgt_map);
    cell_src_det.clear();
    for (auto i : src_map) cell_src_det.push_back(src_scores.low.detection()[i]);
    cell_src = &sub_src;
    cell_tgt = &sub_tgt;
    cell_src_index = &*sub_src_index;
    cell_tgt_index = &*sub_tgt_index;
    cell_src_low = &sub_src_low;
    cell_tgt_low = &sub_tgt_low;
    // Re-anchor each coarse pair at the nearest sampled point.
    for (auto& a : anchors) {
      a.source = sub_src_index->nearest(src[a.source]);
      a.target = sub_tgt_index->nearest(tgt[a.target]);
    }
  }

  std::vector<CorrespondenceSet> cells(anchors.size());
  parallel_for(anchors.size(), [&](std::size_t c) {
    cells[c] = local_cell_match(*cell_src, *cell_tgt, *cell_src_index, *cell_tgt_index,
                                anchors[c], *cell_src_low, *cell_tgt_low, mp.cell_radius,
                                cell_src_det, mp.overlap_cells ? &result.coarse_transform : nullptr);
    if (!src_map.empty()) {
      for (auto& p : cells[c].pairs) {
        p.source = src_map[p.source];
        p.target = tgt_map[p.target];
      }
    }
  });

  for (auto& cell : cells) {
    std::erase_if(cell.pairs, [&](const Correspondence& p) {
      return is_zero_row(src_low, p.source) || is_zero_row(tgt_low, p.target);
    });
  }
  if (mp.fine_gate > 0.0) {
    const double gate2 = mp.fine_gate * mp.fine_gate;
    for (auto& cell : cells) {
      std::erase_if(cell.pairs, [&](const Correspondence& p) {
        return (result.coarse_transform(src[p.source]) - tgt[p.target]).squaredNorm() > gate2;
      });
    }
  }

  CorrespondenceSet collected;
  collected.stage = Stage::kFine;
  if (mp.per_cell_selection) {
    for (const auto& cell : cells) {
      const auto chosen = select_fine_subset(cell, src_scores.low, mp.top_fraction);
      collected.pairs.insert(collected.pairs.end(), chosen.pairs.begin(), chosen.pairs.end());
    }
    result.fine = deduplicate(collected);
  } else {
    for (const auto& cell : cells) {
      collected.pairs.insert(collected.pairs.end(), cell.pairs.begin(), cell.pairs.end());
    }
    result.fine = select_fine_subset(deduplicate(collected), src_scores.low, mp.top_fraction);
  }
  result.fine.stage = Stage::kFine;

  try {
    std::vector<Vec3> fs, ft;
    std::vector<double> fw;
    for (const auto& p : result.fine.pairs) {
      fs.push_back(src[p.source]);
      ft.push_back(tgt[p.target]);
      fw.push_back(p.weight);
    }
    result.transform = weighted_svd(fs, ft, fw);
  } catch (const Error& e) {
    if (!mp.fine_fallback_to_coarse) throw StageError(e, "fine");
    result.transform = result.coarse_transform;
    result.fine_fallback = true;
  }
  result.timings.fine_ms = ms_since(t0);
  result.timings.total_ms = ms_since(t_start);
  return result;
}

}  // namespace hireg
