#include "hireg/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hireg/errors.hpp"
#include "hireg/kernels.hpp"
#include "hireg/parallel.hpp"
#include "hireg/random.hpp"

namespace hireg {
namespace {

void check_unit_interval(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ValidationError(std::string(what) + " scores must lie in [0, 1]");
    }
  }
}

// Nearest-rank percentile of an unsorted copy.
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

ScoreSet::ScoreSet(Level level, std::vector<double> matchability,
                   std::vector<double> overlap)
    : level_(level), matchability_(std::move(matchability)), overlap_(std::move(overlap)) {
  if (matchability_.size() != overlap_.size()) {
    throw ValidationError("matchability and overlap score counts differ");
  }
  check_unit_interval(matchability_, "matchability");
  check_unit_interval(overlap_, "overlap");
  detection_.resize(matchability_.size());
  for (std::size_t i = 0; i < detection_.size(); ++i) {
    detection_[i] = matchability_[i] * overlap_[i];
  }
}

ScoreSet ScoreSet::from_detection(Level level, std::vector<double> detection) {
  std::vector<double> ones(detection.size(), 1.0);
  return ScoreSet(level, std::move(detection), std::move(ones));
}

std::vector<double> score_saliency(const PointCloud& cloud, const DescriptorSet& descs,
                                   const SpatialIndex& index, std::size_t k) {
  validate(cloud);
  if (k < 2) throw ValidationError("saliency needs k >= 2");
  if (cloud.size() < k + 1) {
    throw ValidationError("saliency needs at least k + 1 points (k = " + std::to_string(k) +
                          ", n = " + std::to_string(cloud.size()) + ")");
  }
  if (descs.size() != cloud.size() || index.size() != cloud.size()) {
    throw ValidationError("saliency: descriptor, index and cloud sizes differ");
  }
  std::vector<double> stat(cloud.size(), 0.0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nbrs = index.knn_query(cloud[i], k + 1);
    double sum = 0.0;
    std::size_t used = 0;
    for (auto j : nbrs) {
      if (j == i || used == k) continue;
      sum += feature_distance(descs.row(i), descs.row(j));
      ++used;
    }
    stat[i] = sum / static_cast<double>(used);
  });
  const double scale = percentile(stat, 0.95);
  std::vector<double> scores(cloud.size(), 0.0);
  if (!(scale > 0.0)) return scores;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = std::clamp(stat[i] / scale, 0.0, 1.0);
  }
  return scores;
}

std::vector<double> score_overlap_heuristic(const DescriptorSet& src_descs,
                                            const DescriptorSet& tgt_descs) {
  if (src_descs.level() != tgt_descs.level() || src_descs.dim() != tgt_descs.dim()) {
    throw ValidationError("overlap heuristic needs descriptors of the same level and dimension");
  }
  if (tgt_descs.size() == 0) throw ValidationError("overlap heuristic: empty target");
  const auto& k = kernels::active();
  const std::size_t dim = src_descs.dim();
  std::vector<double> d_nn(src_descs.size());
  parallel_for(src_descs.size(), [&](std::size_t i) {
    d_nn[i] = std::sqrt(k.nearest_row(src_descs.row(i).data(), tgt_descs.data().data(),
                                      tgt_descs.size(), dim)
                            .dist2);
  });
  std::vector<double> scores(d_nn.size());
  if (d_nn.empty()) return scores;
  std::vector<double> sorted = d_nn;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double sigma = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (std::size_t i = 0; i < n; ++i) {
    if (sigma > 0.0) {
      const double r = d_nn[i] / sigma;
      scores[i] = std::exp(-r * r);
    } else {
      scores[i] = d_nn[i] == 0.0 ? 1.0 : 0.0;
    }
  }
  return scores;
}

KeypointSet sample_keypoints(const ScoreSet& scores, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_keypoints needs n >= 1");
  const auto& w = scores.detection();
  // Key log(u)/w is a monotone transform of u^(1/w); the n largest keys form
  // a weighted sample without replacement.
  struct Keyed {
    double key;
    std::size_t index;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(w.size());
  Rng rng(mix_seed(seed, 0x6b70));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double u = uniform_open(rng);  // drawn for every point so streams align
    if (w[i] > 0.0) keyed.push_back({std::log(u) / w[i], i});
  }
  if (keyed.empty()) {
    throw Error(ErrorKind::kDegenerateScores, "sample_keypoints: every detection score is zero");
  }
  const std::size_t take = std::min(n, keyed.size());
  const auto better = [](const Keyed& a, const Keyed& b) {
    return a.key > b.key || (a.key == b.key && a.index < b.index);
  };
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(take),
                    keyed.end(), better);
  KeypointSet out;
  out.level = scores.level();
  out.sample_seed = seed;
  out.shortfall = n - take;
  out.indices.reserve(take);
  for (std::size_t k = 0; k < take; ++k) out.indices.push_back(keyed[k].index);
  return out;
}

}  // namespace hireg
