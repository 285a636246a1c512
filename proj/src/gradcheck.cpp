#include "hireg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hireg/errors.hpp"
#include "hireg/random.hpp"

namespace hireg::gradcheck {

double central_difference(const std::function<double(std::span<const double>)>& f,
                          std::vector<double>& x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  x[i] = x0;
  return (fp - fm) / (2.0 * h);
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

double plain_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

double circle_loss_direct(const DescriptorSet& src, const DescriptorSet& tgt,
                          const SampleBatch& batch, NegativeMode mode,
                          const CircleLossParams& p) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& s : batch.anchors) {
    const auto& neg = mode == NegativeMode::kGlobal ? s.global_negatives : s.local_negatives;
    if (s.positives.empty() || neg.empty()) continue;
    double sum_p = 0.0;
    for (auto j : s.positives) {
      const double d = plain_distance(src.row(s.anchor), tgt.row(j));
      const double beta = p.weighting == CircleWeighting::kConstant
                              ? p.gamma
                              : p.gamma * std::max(0.0, d - p.delta_p);
      sum_p += std::exp(beta * (d - p.delta_p));
    }
    double sum_n = 0.0;
    for (auto k : neg) {
      const double d = plain_distance(src.row(s.anchor), tgt.row(k));
      const double beta = p.weighting == CircleWeighting::kConstant
                              ? p.gamma
                              : p.gamma * std::max(0.0, p.delta_n - d);
      sum_n += std::exp(beta * (p.delta_n - d));
    }
    total += std::log(1.0 + sum_p * sum_n);
    ++used;
  }
  if (used == 0) throw Error(ErrorKind::kDegenerateBatch, "direct circle loss: no usable anchors");
  return total / static_cast<double>(used);
}

double rating_loss_direct(std::span<const double> scores, std::span<const int> rankings,
                          const TargetScores& targets) {
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double r = scores[i] - targets[rankings[i]];
    s += r * r;
  }
  return s / static_cast<double>(scores.size());
}

double overlap_loss_direct(std::span<const double> pred, std::span<const std::uint8_t> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::min(std::max(pred[i], kOverlapClamp), 1.0 - kOverlapClamp);
    s += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return s / static_cast<double>(pred.size());
}

RandomCircleProblem random_circle_problem(std::uint64_t seed, std::size_t anchors,
                                          std::size_t dim) {
  Rng rng(mix_seed(seed, 0xc1));
  const std::size_t n_tgt = anchors * 3;
  const auto unit_rows = [&](std::size_t rows) {
    std::vector<double> data(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
      double n2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        data[r * dim + k] = normal(rng);
        n2 += data[r * dim + k] * data[r * dim + k];
      }
      for (std::size_t k = 0; k < dim; ++k) data[r * dim + k] /= std::sqrt(n2);
    }
    return data;
  };
  RandomCircleProblem prob{DescriptorSet(Level::kHigh, dim, unit_rows(anchors)),
                           DescriptorSet(Level::kHigh, dim, unit_rows(n_tgt)),
                           {}};
  const auto draw_set = [&](std::size_t lo, std::size_t hi, std::vector<std::size_t>& taken) {
    const std::size_t count = lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
    std::vector<std::size_t> out;
    while (out.size() < count) {
      const auto j = static_cast<std::size_t>(uniform_index(rng, n_tgt));
      if (std::find(taken.begin(), taken.end(), j) != taken.end()) continue;
      taken.push_back(j);
      out.push_back(j);
    }
    return out;
  };
  for (std::size_t a = 0; a < anchors; ++a) {
    AnchorSamples s;
    s.anchor = a;
    std::vector<std::size_t> taken;
    s.positives = draw_set(1, 3, taken);
    s.global_negatives = draw_set(2, 6, taken);
    s.local_negatives = draw_set(2, 6, taken);
    prob.batch.anchors.push_back(std::move(s));
  }
  prob.batch.eligible_anchors = anchors;
  return prob;
}

namespace {

// Coordinates whose +-10h neighborhood keeps every affected pair distance
// away from the weighting kinks and from zero.
std::vector<std::size_t> smooth_coordinates(const RandomCircleProblem& prob, NegativeMode mode,
                                            const CircleLossParams& p, double h, bool src_side) {
  const std::size_t dim = prob.src.dim();
  const std::size_t rows = src_side ? prob.src.size() : prob.tgt.size();
  std::vector<bool> row_ok(rows, true);
  std::vector<bool> row_used(rows, false);
  const double guard = 10.0 * h;
  for (const auto& s : prob.batch.anchors) {
    const auto& neg = mode == NegativeMode::kGlobal ? s.global_negatives : s.local_negatives;
    const auto check = [&](std::size_t j, double kink) {
      const double d = plain_distance(prob.src.row(s.anchor), prob.tgt.row(j));
      const bool bad = std::abs(d - kink) < guard || d < guard;
      const std::size_t r = src_side ? s.anchor : j;
      row_used[r] = true;
      if (bad) row_ok[r] = false;
    };
    for (auto j : s.positives) check(j, p.delta_p);
    for (auto k : neg) check(k, p.delta_n);
  }
  std::vector<std::size_t> coords;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_used[r] || !row_ok[r]) continue;
    for (std::size_t k = 0; k < dim; ++k) coords.push_back(r * dim + k);
  }
  return coords;
}

template <typename T>
std::vector<T> pick(std::vector<T> pool, std::size_t n, Rng& rng) {
  for (std::size_t k = 0; k < std::min(n, pool.size()); ++k) {
    std::swap(pool[k], pool[k + static_cast<std::size_t>(uniform_index(rng, pool.size() - k))]);
  }
  pool.resize(std::min(n, pool.size()));
  return pool;
}

CheckResult check_circle(const CheckOptions& opt, NegativeMode mode, CircleWeighting weighting,
                         const std::string& name) {
  const auto prob = random_circle_problem(opt.seed, 8, 4);
  CircleLossParams params;
  params.weighting = weighting;
  auto analytic = circle_loss(prob.src, prob.tgt, prob.batch, mode, params);
  if (opt.corrupt && *opt.corrupt == name) {
    for (auto& g : analytic.grad_src) g *= 1.5;
    for (auto& g : analytic.grad_tgt) g *= 1.5;
  }
  CheckResult res{name, 0.0, 0.0, 0};
  res.loss_difference =
      std::abs(analytic.loss - circle_loss_direct(prob.src, prob.tgt, prob.batch, mode, params));

  Rng rng(mix_seed(opt.seed, 0xfd));
  // Split the budget between source and target coordinates.
  const auto src_coords = pick(smooth_coordinates(prob, mode, params, opt.step, true),
                               opt.coordinates / 2, rng);
  const auto tgt_coords = pick(smooth_coordinates(prob, mode, params, opt.step, false),
                               opt.coordinates - src_coords.size(), rng);

  std::vector<double> src_data = prob.src.data();
  std::vector<double> tgt_data = prob.tgt.data();
  const std::size_t dim = prob.src.dim();
  const auto f_src = [&](std::span<const double> x) {
    return circle_loss_direct(DescriptorSet(Level::kHigh, dim, {x.begin(), x.end()}), prob.tgt,
                              prob.batch, mode, params);
  };
  const auto f_tgt = [&](std::span<const double> x) {
    return circle_loss_direct(prob.src, DescriptorSet(Level::kHigh, dim, {x.begin(), x.end()}),
                              prob.batch, mode, params);
  };
  for (auto i : src_coords) {
    const double num = central_difference(f_src, src_data, i, opt.step);
    res.max_gradient_error = std::max(res.max_gradient_error, relative_error(analytic.grad_src[i], num));
    ++res.coordinates;
  }
  for (auto i : tgt_coords) {
    const double num = central_difference(f_tgt, tgt_data, i, opt.step);
    res.max_gradient_error = std::max(res.max_gradient_error, relative_error(analytic.grad_tgt[i], num));
    ++res.coordinates;
  }
  return res;
}

CheckResult check_rating(const CheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, 0x7a));
  const std::size_t m = 64;
  std::vector<double> scores(m);
  std::vector<int> ranks(m);
  for (std::size_t i = 0; i < m; ++i) {
    scores[i] = uniform_open(rng);
    ranks[i] = static_cast<int>(uniform_index(rng, 4));
  }
  const TargetScores targets;
  auto analytic = rating_loss(scores, ranks, targets);
  if (opt.corrupt && *opt.corrupt == "rating") {
    for (auto& g : analytic.gradient) g *= 1.5;
  }
  CheckResult res{"rating", 0.0, std::abs(analytic.loss - rating_loss_direct(scores, ranks, targets)), 0};
  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  const auto f = [&](std::span<const double> x) { return rating_loss_direct(x, ranks, targets); };
  for (auto i : pick(all, opt.coordinates, rng)) {
    const double num = central_difference(f, scores, i, opt.step);
    res.max_gradient_error = std::max(res.max_gradient_error, relative_error(analytic.gradient[i], num));
    ++res.coordinates;
  }
  return res;
}

CheckResult check_overlap(const CheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, 0x0e));
  const std::size_t m = 64;
  std::vector<double> pred(m);
  std::vector<std::uint8_t> labels(m);
  for (std::size_t i = 0; i < m; ++i) {
    pred[i] = uniform(rng, 0.01, 0.99);
    labels[i] = static_cast<std::uint8_t>(uniform_index(rng, 2));
  }
  auto analytic = overlap_loss(pred, labels);
  if (opt.corrupt && *opt.corrupt == "overlap") {
    for (auto& g : analytic.gradient) g *= 1.5;
  }
  CheckResult res{"overlap", 0.0, std::abs(analytic.loss - overlap_loss_direct(pred, labels)), 0};
  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  const auto f = [&](std::span<const double> x) { return overlap_loss_direct(x, labels); };
  for (auto i : pick(all, opt.coordinates, rng)) {
    const double num = central_difference(f, pred, i, opt.step);
    res.max_gradient_error = std::max(res.max_gradient_error, relative_error(analytic.gradient[i], num));
    ++res.coordinates;
  }
  return res;
}

}  // namespace

std::vector<CheckResult> run_loss_checks(const CheckOptions& options) {
  return {
      check_circle(options, NegativeMode::kGlobal, CircleWeighting::kSelfPaced, "circle_global"),
      check_circle(options, NegativeMode::kLocal, CircleWeighting::kSelfPaced, "circle_local"),
      check_circle(options, NegativeMode::kGlobal, CircleWeighting::kConstant, "circle_global_constant"),
      check_circle(options, NegativeMode::kLocal, CircleWeighting::kConstant, "circle_local_constant"),
      check_rating(options),
      check_overlap(options),
  };
}

}  // namespace hireg::gradcheck
