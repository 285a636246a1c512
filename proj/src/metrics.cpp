#include "hireg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "hireg/errors.hpp"
#include "hireg/spatial_index.hpp"

namespace hireg {

double rotation_error(const RigidTransform& est, const RigidTransform& gt) {
  const Mat3 r = gt.rotation.transpose() * est.rotation;
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = std::min(1.0, axis.norm() / 2.0);
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

double translation_error(const RigidTransform& est, const RigidTransform& gt) {
  return (est.translation - gt.translation).norm();
}

double registration_recall(std::span<const PairEvaluation> evals, double rre_max_deg,
                           double rte_max_m) {
  if (evals.empty()) throw ValidationError("registration_recall: empty evaluation list");
  std::size_t hits = 0;
  for (const auto& e : evals) {
    if (e.rre < rre_max_deg && e.rte < rte_max_m) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(evals.size());
}

InlierRatio inlier_ratio(const CorrespondenceSet& corr, const PointCloud& src,
                         const PointCloud& tgt, const RigidTransform& gt, double tau) {
  if (corr.empty()) return {0.0, true};
  std::size_t hits = 0;
  for (const auto& p : corr.pairs) {
    if (p.source >= src.size() || p.target >= tgt.size()) {
      throw ValidationError("inlier_ratio: correspondence index out of range");
    }
    if ((gt(src[p.source]) - tgt[p.target]).norm() <= tau) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(corr.size()), false};
}

double feature_matching_recall(std::span<const double> inlier_ratios, double threshold) {
  if (inlier_ratios.empty()) throw ValidationError("feature_matching_recall: empty list");
  const auto hits = std::count_if(inlier_ratios.begin(), inlier_ratios.end(),
                                  [&](double ir) { return ir > threshold; });
  return static_cast<double>(hits) / static_cast<double>(inlier_ratios.size());
}

double repeatability(const KeypointSet& kp_src, const KeypointSet& kp_tgt,
                     const PointCloud& src, const PointCloud& tgt,
                     const RigidTransform& gt, double r) {
  if (kp_src.indices.empty() || kp_tgt.indices.empty()) {
    throw ValidationError("repeatability: empty keypoint set");
  }
  PointCloud tgt_kp;
  for (auto j : kp_tgt.indices) {
    if (j >= tgt.size()) throw ValidationError("repeatability: keypoint index out of range");
    tgt_kp.points.push_back(tgt[j]);
  }
  const SpatialIndex index(tgt_kp);
  std::size_t hits = 0;
  for (auto i : kp_src.indices) {
    if (i >= src.size()) throw ValidationError("repeatability: keypoint index out of range");
    if (!index.radius_query(gt(src[i]), r).empty()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(kp_src.size());
}

PairEvaluation evaluate_pair(const RegistrationResult& result, const PointCloud& src,
                             const PointCloud& tgt, const RigidTransform& gt,
                             const MetricThresholds& th) {
  PairEvaluation e;
  e.rre = rotation_error(result.transform, gt);
  e.rte = translation_error(result.transform, gt);
  e.inlier_ratio = inlier_ratio(result.fine, src, tgt, gt, th.inlier_tau).ratio;
  e.coarse_inlier_ratio = inlier_ratio(result.coarse, src, tgt, gt, th.inlier_tau).ratio;
  e.fmr_hit = e.inlier_ratio > th.fmr_threshold;
  e.repeatability = repeatability(result.src_keypoints, result.tgt_keypoints, src, tgt, gt,
                                  th.repeatability_radius);
  e.registered = e.rre < th.rre_max_deg && e.rte < th.rte_max_m;
  return e;
}

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void aggregate(MetricBlock& b, const MetricThresholds& th) {
  std::vector<PairEvaluation> ok;
  for (std::size_t i = 0; i < b.pairs.size(); ++i) {
    if (i < b.failures.size() && !b.failures[i].empty()) continue;
    ok.push_back(b.pairs[i]);
  }
  // Failed pairs count against recall but carry no errors or ratios.
  const std::size_t total = b.pairs.size();
  if (total == 0) {
    b.rr = b.mean_rre = b.median_rre = b.mean_rte = b.median_rte = b.mean_ir =
        b.mean_coarse_ir = b.fmr = b.mean_rep = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  std::size_t hits = 0;
  std::vector<double> rre, rte, ir, cir, rep;
  std::size_t fmr_hits = 0;
  for (const auto& e : ok) {
    if (e.rre < th.rre_max_deg && e.rte < th.rte_max_m) {
      ++hits;
      rre.push_back(e.rre);
      rte.push_back(e.rte);
    }
    ir.push_back(e.inlier_ratio);
    cir.push_back(e.coarse_inlier_ratio);
    rep.push_back(e.repeatability);
    if (e.inlier_ratio > th.fmr_threshold) ++fmr_hits;
  }
  const auto denom = static_cast<double>(total);
  b.rr = static_cast<double>(hits) / denom;
  b.fmr = static_cast<double>(fmr_hits) / denom;
  b.mean_rre = mean(rre);
  b.median_rre = median(rre);
  b.mean_rte = mean(rte);
  b.median_rte = median(rte);
  b.mean_ir = mean(ir);
  b.mean_coarse_ir = mean(cir);
  b.mean_rep = mean(rep);
}

std::string format_table(const BenchmarkReport& report) {
  std::ostringstream os;
  const int label_w = 24;
  const int col_w = 10;
  const auto rule = [&] {
    os << std::string(static_cast<std::size_t>(label_w + col_w * static_cast<int>(report.blocks.size())), '-')
       << '\n';
  };
  os << std::left << std::setw(label_w) << "#Samples" << std::right;
  for (const auto& b : report.blocks) os << std::setw(col_w) << b.samples;
  os << '\n';

  struct Row {
    const char* section;
    const char* label;
    double MetricBlock::*field;
    double scale;
    int precision;
  };
  const Row rows[] = {
      {"Registration Recall (%)", "RR", &MetricBlock::rr, 100.0, 1},
      {"RRE (deg)", "mean", &MetricBlock::mean_rre, 1.0, 3},
      {nullptr, "median", &MetricBlock::median_rre, 1.0, 3},
      {"RTE (m)", "mean", &MetricBlock::mean_rte, 1.0, 3},
      {nullptr, "median", &MetricBlock::median_rte, 1.0, 3},
      {"Descriptors/detectors (%)", "IR fine", &MetricBlock::mean_ir, 100.0, 1},
      {nullptr, "IR coarse", &MetricBlock::mean_coarse_ir, 100.0, 1},
      {nullptr, "FMR", &MetricBlock::fmr, 100.0, 1},
      {nullptr, "Rep", &MetricBlock::mean_rep, 100.0, 1},
  };
  for (const auto& row : rows) {
    if (row.section) {
      rule();
      os << row.section << '\n';
      rule();
    }
    os << std::left << std::setw(label_w) << row.label << std::right;
    for (const auto& b : report.blocks) {
      const double v = b.*row.field;
      if (std::isnan(v)) {
        os << std::setw(col_w) << "-";
      } else {
        os << std::setw(col_w) << std::fixed << std::setprecision(row.precision) << v * row.scale;
      }
    }
    os << '\n';
  }
  rule();
  os << "RR definition: " << report.recall_definition << " with RRE < "
     << report.thresholds.rre_max_deg << " deg, RTE < " << report.thresholds.rte_max_m
     << " m; RRE/RTE averaged over registered pairs\n";
  return os.str();
}

}  // namespace hireg
