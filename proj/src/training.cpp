#include "hireg/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hireg/errors.hpp"
#include "hireg/kernels.hpp"
#include "hireg/random.hpp"
#include "hireg/spatial_index.hpp"

namespace hireg {

void validate(const SamplingRadii& r) {
  if (!(r.r_p > 0.0) || !(r.r_p < r.r_n_local) || !(r.r_n_local < r.r_n_global) ||
      !std::isfinite(r.r_n_global)) {
    throw ValidationError("sampling radii must satisfy 0 < r_p < r_n_local < r_n_global");
  }
}

void validate(const CircleLossParams& p) {
  if (!(p.delta_p < p.delta_n)) throw ValidationError("circle loss needs delta_p < delta_n");
  if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) {
    throw ValidationError("circle loss needs gamma > 0");
  }
}

void validate(const TargetScores& t) {
  for (double v : t.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("target scores must lie in [0, 1]");
  }
  if (!(t.values[3] > t.values[2] && t.values[2] > t.values[1] &&
        t.values[1] > t.values[0])) {
    throw ValidationError("target scores must satisfy c3 > c2 > c1 > c0");
  }
}

SampleBatch build_sample_batch(const PointCloud& source, const PointCloud& target,
                               const RigidTransform& gt, const SamplingRadii& radii,
                               std::size_t n_p, std::uint64_t seed) {
  validate(source);
  validate(target);
  validate(radii);
  if (n_p == 0) throw ValidationError("n_p must be >= 1");
  const PointCloud aligned = apply_transform(source, gt);
  const SpatialIndex tgt_index(target);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    if (!tgt_index.radius_query(aligned[i], radii.r_p).empty()) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw Error(ErrorKind::kNoCorrespondence,
                "no source point has a target point within r_p under the ground truth");
  }

  // Partial Fisher-Yates over the eligible anchors.
  Rng rng(mix_seed(seed, 0x5a3b));
  const std::size_t take = std::min(n_p, eligible.size());
  std::vector<std::size_t> pool = eligible;
  for (std::size_t k = 0; k < take; ++k) {
    const auto j = k + static_cast<std::size_t>(uniform_index(rng, pool.size() - k));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());

  const double rp2 = radii.r_p * radii.r_p;
  const double rl2 = radii.r_n_local * radii.r_n_local;
  const double rg2 = radii.r_n_global * radii.r_n_global;

  SampleBatch batch;
  batch.eligible_anchors = eligible.size();
  batch.anchors.reserve(take);
  std::vector<std::uint8_t> near_mark(target.size(), 0);
  for (auto a : pool) {
    AnchorSamples s;
    s.anchor = a;
    const Vec3& c = aligned[a];
    const auto near = tgt_index.radius_query(c, radii.r_n_global);
    for (auto j : near) {
      near_mark[j] = 1;
      const double d2 = (target[j] - c).squaredNorm();
      if (d2 <= rp2) {
        s.positives.push_back(j);
      } else if (d2 > rl2 && d2 < rg2) {
        s.local_negatives.push_back(j);
      }
    }
    for (std::size_t j = 0; j < target.size(); ++j) {
      if (!near_mark[j]) s.global_negatives.push_back(j);
    }
    for (auto j : near) near_mark[j] = 0;
    batch.anchors.push_back(std::move(s));
  }
  return batch;
}

namespace {

struct PairTerm {
  double exponent;
  double d_exponent_d_distance;
};

PairTerm positive_term(double d, const CircleLossParams& p) {
  const double x = d - p.delta_p;
  if (p.weighting == CircleWeighting::kConstant) return {p.gamma * x, p.gamma};
  const double beta = p.gamma * std::max(0.0, x);
  return {beta * x, 2.0 * beta};
}

PairTerm negative_term(double d, const CircleLossParams& p) {
  const double y = p.delta_n - d;
  if (p.weighting == CircleWeighting::kConstant) return {p.gamma * y, -p.gamma};
  const double beta = p.gamma * std::max(0.0, y);
  return {beta * y, -2.0 * beta};
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Accumulates d(distance)/d(a) * scale into ga and the negation into gb.
void accumulate_distance_grad(std::span<const double> a, std::span<const double> b,
                              double distance, double scale, double* ga, double* gb) {
  if (distance <= 0.0) return;  // subgradient 0 at coincident descriptors
  const double k = scale / distance;
  for (std::size_t e = 0; e < a.size(); ++e) {
    const double g = k * (a[e] - b[e]);
    ga[e] += g;
    gb[e] -= g;
  }
}

}  // namespace

CircleLossResult circle_loss(const DescriptorSet& descs_src,
                             const DescriptorSet& descs_tgt,
                             const SampleBatch& batch, NegativeMode negatives,
                             const CircleLossParams& params) {
  validate(params);
  if (descs_src.dim() != descs_tgt.dim()) {
    throw ValidationError("circle loss: source and target descriptor dimensions differ");
  }
  if (batch.anchors.empty()) throw ValidationError("circle loss: empty sample batch");
  const std::size_t dim = descs_src.dim();

  CircleLossResult result;
  result.grad_src.assign(descs_src.data().size(), 0.0);
  result.grad_tgt.assign(descs_tgt.data().size(), 0.0);

  // Anchors are reduced in batch order.
  std::vector<double> pos_e, neg_e, pos_dd, neg_dd, pos_d, neg_d;
  double total = 0.0;

  for (const auto& s : batch.anchors) {
    const auto& neg_set =
        negatives == NegativeMode::kGlobal ? s.global_negatives : s.local_negatives;
    if (s.positives.empty() || neg_set.empty()) {
      ++result.skipped_anchors;
      continue;
    }
    if (s.anchor >= descs_src.size()) throw ValidationError("circle loss: anchor out of range");
    const auto a = descs_src.row(s.anchor);

    pos_e.clear(); pos_dd.clear(); pos_d.clear();
    neg_e.clear(); neg_dd.clear(); neg_d.clear();
    for (auto j : s.positives) {
      const double d = feature_distance(a, descs_tgt.row(j));
      const PairTerm t = positive_term(d, params);
      pos_d.push_back(d);
      pos_e.push_back(t.exponent);
      pos_dd.push_back(t.d_exponent_d_distance);
    }
    for (auto k : neg_set) {
      const double d = feature_distance(a, descs_tgt.row(k));
      const PairTerm t = negative_term(d, params);
      neg_d.push_back(d);
      neg_e.push_back(t.exponent);
      neg_dd.push_back(t.d_exponent_d_distance);
    }
    const double lp = log_sum_exp(pos_e);
    const double ln = log_sum_exp(neg_e);
    const double z = lp + ln;
    total += softplus(z);
    const double outer = sigmoid(z);

    double* ga = result.grad_src.data() + s.anchor * dim;
    for (std::size_t q = 0; q < s.positives.size(); ++q) {
      const double w = outer * std::exp(pos_e[q] - lp) * pos_dd[q];
      const auto j = s.positives[q];
      accumulate_distance_grad(a, descs_tgt.row(j), pos_d[q], w, ga,
                               result.grad_tgt.data() + j * dim);
    }
    for (std::size_t q = 0; q < neg_set.size(); ++q) {
      const double w = outer * std::exp(neg_e[q] - ln) * neg_dd[q];
      const auto k = neg_set[q];
      accumulate_distance_grad(a, descs_tgt.row(k), neg_d[q], w, ga,
                               result.grad_tgt.data() + k * dim);
    }
    ++result.used_anchors;
  }

  if (result.used_anchors == 0) {
    throw Error(ErrorKind::kDegenerateBatch,
                "circle loss: every anchor lacks positives or negatives");
  }
  const double inv = 1.0 / static_cast<double>(result.used_anchors);
  result.loss = total * inv;
  for (double& g : result.grad_src) g *= inv;
  for (double& g : result.grad_tgt) g *= inv;
  return result;
}

MatchabilityLabels matchability_labels(const DescriptorSet& descs_src,
                                       const DescriptorSet& descs_tgt,
                                       const SampleBatch& batch, Level level,
                                       PositiveReduction reduction) {
  if (descs_src.dim() != descs_tgt.dim()) {
    throw ValidationError("matchability: source and target descriptor dimensions differ");
  }
  MatchabilityLabels out;
  out.bits.assign(batch.size(), 0);
  out.valid.assign(batch.size(), false);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch.anchors[i];
    const auto& neg = level == Level::kLow ? s.local_negatives : s.global_negatives;
    if (s.positives.empty() || neg.empty()) continue;
    const auto a = descs_src.row(s.anchor);

    double d_pos = reduction == PositiveReduction::kMin
                       ? std::numeric_limits<double>::infinity()
                       : 0.0;
    for (auto j : s.positives) {
      const double d = feature_distance(a, descs_tgt.row(j));
      d_pos = reduction == PositiveReduction::kMin ? std::min(d_pos, d) : d_pos + d;
    }
    if (reduction == PositiveReduction::kMean) d_pos /= static_cast<double>(s.positives.size());

    double d_neg = std::numeric_limits<double>::infinity();
    for (auto k : neg) d_neg = std::min(d_neg, feature_distance(a, descs_tgt.row(k)));

    out.valid[i] = true;
    out.bits[i] = d_pos - d_neg < 0.0 ? 1 : 0;
  }
  return out;
}

Rankings keypoint_rankings(std::span<const std::uint8_t> m_high,
                           std::span<const std::uint8_t> m_low) {
  if (m_high.size() != m_low.size()) {
    throw ValidationError("keypoint_rankings: label lengths differ");
  }
  Rankings r;
  r.r_high.resize(m_high.size());
  r.r_low.resize(m_high.size());
  for (std::size_t i = 0; i < m_high.size(); ++i) {
    if (m_high[i] > 1 || m_low[i] > 1) throw ValidationError("matchability labels must be 0 or 1");
    r.r_high[i] = 2 * m_high[i] + m_low[i];
    r.r_low[i] = 2 * m_low[i] + m_high[i];
  }
  return r;
}

LossResult rating_loss(std::span<const double> scores, std::span<const int> rankings,
                       const TargetScores& targets) {
  validate(targets);
  if (scores.size() != rankings.size() || scores.empty()) {
    throw ValidationError("rating_loss needs equal, nonzero lengths");
  }
  const double m = static_cast<double>(scores.size());
  LossResult out;
  out.gradient.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (rankings[i] < 0 || rankings[i] > 3) throw ValidationError("rankings must lie in 0..3");
    if (!std::isfinite(scores[i])) throw ValidationError("rating_loss: non-finite score");
    const double r = scores[i] - targets[rankings[i]];
    out.loss += r * r;
    out.gradient[i] = 2.0 * r / m;
  }
  out.loss /= m;
  return out;
}

OverlapLabels overlap_labels(const PointCloud& source, const PointCloud& target,
                             const RigidTransform& gt, double r_p) {
  validate(source);
  validate(target);
  if (!(r_p > 0.0)) throw ValidationError("overlap radius must be > 0");
  const PointCloud aligned = apply_transform(source, gt);
  const SpatialIndex tgt_index(target);
  const SpatialIndex src_index(aligned);
  OverlapLabels out;
  out.source.resize(source.size());
  out.target.resize(target.size());
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    out.source[i] = tgt_index.radius_query(aligned[i], r_p).empty() ? 0 : 1;
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    out.target[j] = src_index.radius_query(target[j], r_p).empty() ? 0 : 1;
  }
  return out;
}

LossResult overlap_loss(std::span<const double> pred,
                        std::span<const std::uint8_t> labels) {
  if (pred.size() != labels.size() || pred.empty()) {
    throw ValidationError("overlap_loss needs equal, nonzero lengths");
  }
  const double m = static_cast<double>(pred.size());
  LossResult out;
  out.gradient.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i])) throw ValidationError("overlap_loss: non-finite prediction");
    const double p = std::clamp(pred[i], kOverlapClamp, 1.0 - kOverlapClamp);
    const double y = labels[i] ? 1.0 : 0.0;
    out.loss -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    const bool clamped = pred[i] < kOverlapClamp || pred[i] > 1.0 - kOverlapClamp;
    out.gradient[i] = clamped ? 0.0 : (p - y) / (p * (1.0 - p)) / m;
  }
  out.loss /= m;
  return out;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  const double parts[] = {c.descriptor_high, c.descriptor_low, c.overlap,
                          c.matchability_high, c.matchability_low};
  for (double v : parts) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("total_loss: components must be finite and >= 0");
    }
  }
  return w.descriptor_high * c.descriptor_high + w.descriptor_low * c.descriptor_low +
         w.overlap * c.overlap + w.matchability_high * c.matchability_high +
         w.matchability_low * c.matchability_low;
}

}  // namespace hireg
