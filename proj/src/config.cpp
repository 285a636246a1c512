#include "hireg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "hireg/errors.hpp"

namespace hireg {
namespace {

using nlohmann::json;

// Reads keys of one JSON object, rejecting any key it was not asked about.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError("config section '" + name_ + "' must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config '" + name_ + "." + key + "': " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError("config '" + name_ + "': unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

const char* reduction_name(PositiveReduction r) { return r == PositiveReduction::kMin ? "min" : "mean"; }
const char* weighting_name(CircleWeighting w) {
  return w == CircleWeighting::kSelfPaced ? "self_paced" : "constant";
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

RegistrationConfig RunConfig::registration() const {
  RegistrationConfig r;
  r.descriptors = descriptors;
  r.ransac = ransac;
  r.matching = matching;
  r.seed = seed;
  return r;
}

void validate(const RunConfig& c) {
  validate(c.descriptors);
  validate(c.sampling.radii);
  if (c.sampling.n_p == 0) throw ValidationError("sampling.n_p must be >= 1");
  validate(c.circle_loss);
  validate(c.targets);
  validate(c.ransac);
  if (c.matching.coarse_samples == 0) throw ValidationError("detectors.coarse_samples must be >= 1");
  if (c.matching.saliency_k < 2) throw ValidationError("detectors.saliency_k must be >= 2");
  if (!(c.matching.fine_gate >= 0.0)) throw ValidationError("matching.fine_gate must be >= 0");
  if (!(c.matching.cell_radius > 0.0)) throw ValidationError("matching.cell_radius must be > 0");
  if (!(c.matching.top_fraction > 0.0 && c.matching.top_fraction <= 1.0)) {
    throw ValidationError("matching.top_fraction must lie in (0, 1]");
  }
  const auto& m = c.metrics;
  if (!(m.rre_max_deg > 0.0 && m.rte_max_m > 0.0 && m.inlier_tau > 0.0 &&
        m.repeatability_radius > 0.0 && m.fmr_threshold >= 0.0 && m.fmr_threshold <= 1.0)) {
    throw ValidationError("metric thresholds must be positive (fmr_threshold in [0, 1])");
  }
}

json to_json(const RunConfig& c) {
  const auto& w = c.loss_weights;
  return {
      {"seed", c.seed},
      {"descriptors",
       {{"low_radius", c.descriptors.low_radius},
        {"high_radius", c.descriptors.high_radius},
        {"normal_radius", c.descriptors.normal_radius},
        {"bins", c.descriptors.bins}}},
      {"sampling",
       {{"r_p", c.sampling.radii.r_p},
        {"r_n_local", c.sampling.radii.r_n_local},
        {"r_n_global", c.sampling.radii.r_n_global},
        {"n_p", c.sampling.n_p},
        {"positive_reduction", reduction_name(c.sampling.positive_reduction)}}},
      {"circle_loss",
       {{"delta_p", c.circle_loss.delta_p},
        {"delta_n", c.circle_loss.delta_n},
        {"gamma", c.circle_loss.gamma},
        {"weighting", weighting_name(c.circle_loss.weighting)}}},
      {"target_scores",
       {{"c3", c.targets.values[3]},
        {"c2", c.targets.values[2]},
        {"c1", c.targets.values[1]},
        {"c0", c.targets.values[0]}}},
      {"loss_weights",
       {{"descriptor_high", w.descriptor_high},
        {"descriptor_low", w.descriptor_low},
        {"overlap", w.overlap},
        {"matchability_high", w.matchability_high},
        {"matchability_low", w.matchability_low}}},
      {"detectors",
       {{"saliency_k", c.matching.saliency_k},
        {"coarse_samples", c.matching.coarse_samples},
        {"fine_samples", c.matching.fine_samples}}},
      {"ransac",
       {{"max_iterations", c.ransac.max_iterations},
        {"inlier_threshold", c.ransac.inlier_threshold},
        {"sample_size", c.ransac.sample_size},
        {"confidence", c.ransac.confidence},
        {"seed", c.ransac.seed}}},
      {"matching",
       {{"mutual", c.matching.mutual},
        {"cell_radius", c.matching.cell_radius},
        {"top_fraction", c.matching.top_fraction},
        {"per_cell_selection", c.matching.per_cell_selection},
        {"fine_fallback_to_coarse", c.matching.fine_fallback_to_coarse},
        {"min_coarse_inliers", c.matching.min_coarse_inliers},
        {"fine_gate", c.matching.fine_gate},
        {"overlap_cells", c.matching.overlap_cells}}},
      {"metrics",
       {{"rre_max_deg", c.metrics.rre_max_deg},
        {"rte_max_m", c.metrics.rte_max_m},
        {"inlier_tau", c.metrics.inlier_tau},
        {"fmr_threshold", c.metrics.fmr_threshold},
        {"repeatability_radius", c.metrics.repeatability_radius}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "root");
  root.get("seed", c.seed);
  if (root.has("descriptors")) {
    Section s(root.at("descriptors"), "descriptors");
    s.get("low_radius", c.descriptors.low_radius);
    s.get("high_radius", c.descriptors.high_radius);
    s.get("normal_radius", c.descriptors.normal_radius);
    s.get("bins", c.descriptors.bins);
    s.finish();
  }
  if (root.has("sampling")) {
    Section s(root.at("sampling"), "sampling");
    s.get("r_p", c.sampling.radii.r_p);
    s.get("r_n_local", c.sampling.radii.r_n_local);
    s.get("r_n_global", c.sampling.radii.r_n_global);
    s.get("n_p", c.sampling.n_p);
    std::string red = reduction_name(c.sampling.positive_reduction);
    s.get("positive_reduction", red);
    if (red == "min") {
      c.sampling.positive_reduction = PositiveReduction::kMin;
    } else if (red == "mean") {
      c.sampling.positive_reduction = PositiveReduction::kMean;
    } else {
      throw ValidationError("sampling.positive_reduction must be 'min' or 'mean'");
    }
    s.finish();
  }
  if (root.has("circle_loss")) {
    Section s(root.at("circle_loss"), "circle_loss");
    s.get("delta_p", c.circle_loss.delta_p);
    s.get("delta_n", c.circle_loss.delta_n);
    s.get("gamma", c.circle_loss.gamma);
    std::string wname = weighting_name(c.circle_loss.weighting);
    s.get("weighting", wname);
    if (wname == "self_paced") {
      c.circle_loss.weighting = CircleWeighting::kSelfPaced;
    } else if (wname == "constant") {
      c.circle_loss.weighting = CircleWeighting::kConstant;
    } else {
      throw ValidationError("circle_loss.weighting must be 'self_paced' or 'constant'");
    }
    s.finish();
  }
  if (root.has("target_scores")) {
    Section s(root.at("target_scores"), "target_scores");
    s.get("c3", c.targets.values[3]);
    s.get("c2", c.targets.values[2]);
    s.get("c1", c.targets.values[1]);
    s.get("c0", c.targets.values[0]);
    s.finish();
  }
  if (root.has("loss_weights")) {
    Section s(root.at("loss_weights"), "loss_weights");
    s.get("descriptor_high", c.loss_weights.descriptor_high);
    s.get("descriptor_low", c.loss_weights.descriptor_low);
    s.get("overlap", c.loss_weights.overlap);
    s.get("matchability_high", c.loss_weights.matchability_high);
    s.get("matchability_low", c.loss_weights.matchability_low);
    s.finish();
  }
  if (root.has("detectors")) {
    Section s(root.at("detectors"), "detectors");
    s.get("saliency_k", c.matching.saliency_k);
    s.get("coarse_samples", c.matching.coarse_samples);
    s.get("fine_samples", c.matching.fine_samples);
    s.finish();
  }
  if (root.has("ransac")) {
    Section s(root.at("ransac"), "ransac");
    s.get("max_iterations", c.ransac.max_iterations);
    s.get("inlier_threshold", c.ransac.inlier_threshold);
    s.get("sample_size", c.ransac.sample_size);
    s.get("confidence", c.ransac.confidence);
    s.get("seed", c.ransac.seed);
    s.finish();
  }
  if (root.has("matching")) {
    Section s(root.at("matching"), "matching");
    s.get("mutual", c.matching.mutual);
    s.get("cell_radius", c.matching.cell_radius);
    s.get("top_fraction", c.matching.top_fraction);
    s.get("per_cell_selection", c.matching.per_cell_selection);
    s.get("fine_fallback_to_coarse", c.matching.fine_fallback_to_coarse);
    s.get("min_coarse_inliers", c.matching.min_coarse_inliers);
    s.get("fine_gate", c.matching.fine_gate);
    s.get("overlap_cells", c.matching.overlap_cells);
    s.finish();
  }
  if (root.has("metrics")) {
    Section s(root.at("metrics"), "metrics");
    s.get("rre_max_deg", c.metrics.rre_max_deg);
    s.get("rte_max_m", c.metrics.rte_max_m);
    s.get("inlier_tau", c.metrics.inlier_tau);
    s.get("fmr_threshold", c.metrics.fmr_threshold);
    s.get("repeatability_radius", c.metrics.repeatability_radius);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  return {{"rotation", rot},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from_json(const json& j) {
  try {
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto tr = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || tr.size() != 3) {
      throw ValidationError("transform needs 9 rotation and 3 translation values");
    }
    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
    }
    t.translation = Vec3(tr[0], tr[1], tr[2]);
    // Files written with float precision are re-orthonormalized, but only
    // when they are already close to a rotation.
    if (!is_valid(t) && is_valid(t, 1e-5)) t.rotation = nearest_rotation(t.rotation);
    validate(t);
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("transform JSON: ") + e.what());
  }
}

json to_json(const SceneSpec& s) {
  json j = {{"shape", to_string(s.shape)},
            {"points", s.points},
            {"overlap", s.overlap},
            {"noise_sigma", s.noise_sigma},
            {"outlier_fraction", s.outlier_fraction},
            {"max_rotation_deg", s.max_rotation_deg},
            {"max_translation", s.max_translation},
            {"overlap_radius", s.overlap_radius},
            {"seed", s.seed}};
  j["gt"] = s.gt ? to_json(*s.gt) : json("random");
  return j;
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  Section sec(j, "scene");
  std::string shape = to_string(s.shape);
  sec.get("shape", shape);
  s.shape = shape_from_string(shape);
  sec.get("points", s.points);
  sec.get("overlap", s.overlap);
  sec.get("noise_sigma", s.noise_sigma);
  sec.get("outlier_fraction", s.outlier_fraction);
  sec.get("max_rotation_deg", s.max_rotation_deg);
  sec.get("max_translation", s.max_translation);
  sec.get("overlap_radius", s.overlap_radius);
  sec.get("seed", s.seed);
  if (sec.has("gt")) {
    const auto& g = sec.at("gt");
    if (!(g.is_string() && g.get<std::string>() == "random")) s.gt = transform_from_json(g);
  }
  sec.finish();
  validate(s);
  return s;
}

json to_json(const RegistrationResult& r) {
  const auto pairs = [](const CorrespondenceSet& c) {
    json a = json::array();
    for (const auto& p : c.pairs) a.push_back({p.source, p.target});
    return a;
  };
  json weights = json::array();
  for (const auto& p : r.fine.pairs) weights.push_back(p.weight);
  json j = to_json(r.transform);
  const json coarse = to_json(r.coarse_transform);
  j["coarse_rotation"] = coarse["rotation"];
  j["coarse_translation"] = coarse["translation"];
  j["coarse_pairs"] = pairs(r.coarse);
  j["fine_pairs"] = pairs(r.fine);
  j["fine_weights"] = weights;
  j["inlier_count"] = r.inlier_count;
  j["iterations_used"] = r.iterations_used;
  j["fine_fallback"] = r.fine_fallback;
  j["timings_ms"] = {{"descriptors", r.timings.descriptors_ms},
                     {"detection", r.timings.detection_ms},
                     {"coarse", r.timings.coarse_ms},
                     {"fine", r.timings.fine_ms},
                     {"total", r.timings.total_ms}};
  return j;
}

json to_json(const BenchmarkReport& report) {
  json blocks = json::array();
  for (const auto& b : report.blocks) {
    json rows = json::array();
    for (std::size_t i = 0; i < b.pairs.size(); ++i) {
      const auto& e = b.pairs[i];
      json row = {{"label", i < b.pair_labels.size() ? b.pair_labels[i] : std::to_string(i)},
                  {"rre", number_or_null(e.rre)},
                  {"rte", number_or_null(e.rte)},
                  {"inlier_ratio", e.inlier_ratio},
                  {"coarse_inlier_ratio", e.coarse_inlier_ratio},
                  {"fmr_hit", e.fmr_hit},
                  {"repeatability", e.repeatability},
                  {"registered", e.registered}};
      if (i < b.failures.size() && !b.failures[i].empty()) row["failure"] = b.failures[i];
      rows.push_back(row);
    }
    blocks.push_back({{"samples", b.samples},
                      {"rr", number_or_null(b.rr)},
                      {"mean_rre", number_or_null(b.mean_rre)},
                      {"median_rre", number_or_null(b.median_rre)},
                      {"mean_rte", number_or_null(b.mean_rte)},
                      {"median_rte", number_or_null(b.median_rte)},
                      {"mean_ir", number_or_null(b.mean_ir)},
                      {"mean_coarse_ir", number_or_null(b.mean_coarse_ir)},
                      {"fmr", number_or_null(b.fmr)},
                      {"mean_rep", number_or_null(b.mean_rep)},
                      {"pairs", rows}});
  }
  const auto& t = report.thresholds;
  return {{"recall_definition", report.recall_definition},
          {"thresholds",
           {{"rre_max_deg", t.rre_max_deg},
            {"rte_max_m", t.rte_max_m},
            {"inlier_tau", t.inlier_tau},
            {"fmr_threshold", t.fmr_threshold},
            {"repeatability_radius", t.repeatability_radius}}},
          {"blocks", blocks}};
}

}  // namespace hireg
