#include "hireg/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hireg/config.hpp"
#include "hireg/errors.hpp"
#include "hireg/gradcheck.hpp"
#include "hireg/io.hpp"
#include "hireg/matching.hpp"
#include "hireg/metrics.hpp"
#include "hireg/random.hpp"
#include "hireg/scene.hpp"
#include "hireg/training.hpp"

namespace hireg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNoConsensus:
    case ErrorKind::kNoCorrespondence:
      return kNoConsensus;
    case ErrorKind::kNumerical:
      return kNumerical;
    default:
      return kValidation;
  }
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  if (seed) c.seed = *seed;
  validate(c);
  return c;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// Writes to the file when a path is given, otherwise to `out`.
void emit(const std::string& path, std::ostream& out, const std::string& text) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path);
  f << text;
}

struct RegisterArgs {
  std::string src, tgt, gt, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_register(const RegisterArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.config, a.seed);
  const PointCloud src = io::read_cloud(a.src);
  const PointCloud tgt = io::read_cloud(a.tgt);
  const auto result = register_clouds(src, tgt, cfg.registration());
  json j = to_json(result);
  if (!a.gt.empty()) {
    const RigidTransform gt = io::read_transform(a.gt);
    const auto ev = evaluate_pair(result, src, tgt, gt, cfg.metrics);
    j["rre_deg"] = ev.rre;
    j["rte_m"] = ev.rte;
    j["inlier_ratio"] = ev.inlier_ratio;
    j["coarse_inlier_ratio"] = ev.coarse_inlier_ratio;
    j["registered"] = ev.registered;
  }
  emit(a.out, out, j.dump(2) + "\n");
  return kOk;
}

struct LabelsArgs {
  std::string src, tgt, gt, config, out;
  std::string src_low, src_high, tgt_low, tgt_high;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
};

DescriptorSet load_or_compute(const std::string& dump, const PointCloud& cloud, Level level,
                              const DescriptorParams& params, const char* what) {
  if (dump.empty()) return compute_descriptors(cloud, level, params);
  DescriptorSet d = io::read_descriptors(fs::path(dump));
  if (d.size() != cloud.size()) {
    throw ValidationError(std::string(what) + " descriptors have " + std::to_string(d.size()) +
                          " rows, cloud has " + std::to_string(cloud.size()) + " points");
  }
  if (d.level() != level) {
    throw ValidationError(std::string(what) + " descriptors are " + to_string(d.level()) +
                          " level, expected " + to_string(level));
  }
  return d;
}

int cmd_labels(const LabelsArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.config, a.seed);
  const PointCloud src = io::read_cloud(a.src);
  const PointCloud tgt = io::read_cloud(a.tgt);
  const RigidTransform gt = io::read_transform(a.gt);
  validate(src);
  validate(tgt);
  const std::size_t n_p = a.samples.value_or(cfg.sampling.n_p);
  if (n_p == 0) throw ValidationError("--samples must be >= 1");

  const auto batch = build_sample_batch(src, tgt, gt, cfg.sampling.radii, n_p, cfg.seed);
  const auto& dp = cfg.descriptors;
  const auto src_low = load_or_compute(a.src_low, src, Level::kLow, dp, "source low");
  const auto src_high = load_or_compute(a.src_high, src, Level::kHigh, dp, "source high");
  const auto tgt_low = load_or_compute(a.tgt_low, tgt, Level::kLow, dp, "target low");
  const auto tgt_high = load_or_compute(a.tgt_high, tgt, Level::kHigh, dp, "target high");
  if (src_low.dim() != tgt_low.dim() || src_high.dim() != tgt_high.dim()) {
    throw ValidationError("source and target descriptor dimensions differ");
  }

  const auto red = cfg.sampling.positive_reduction;
  const auto high = matchability_labels(src_high, tgt_high, batch, Level::kHigh, red);
  const auto low = matchability_labels(src_low, tgt_low, batch, Level::kLow, red);
  const auto ranks = keypoint_rankings(high.bits, low.bits);

  std::ostringstream lines;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    json rec;
    rec["anchor"] = batch.anchors[i].anchor;
    if (!high.valid[i] || !low.valid[i]) {
      rec["skipped_reason"] = !high.valid[i] ? "no global negatives" : "no local negatives";
    } else {
      rec["m_high"] = high.bits[i];
      rec["m_low"] = low.bits[i];
      rec["r_high"] = ranks.r_high[i];
      rec["r_low"] = ranks.r_low[i];
      ++labeled;
    }
    lines << rec.dump() << "\n";
  }
  emit(a.out, out, lines.str());
  err << "labeled " << labeled << " of " << batch.size() << " anchors ("
      << batch.size() - labeled << " skipped, " << batch.eligible_anchors << " eligible)\n";
  return kOk;
}

struct LosscheckArgs {
  std::uint64_t seed = 0;
  std::size_t coordinates = 20;
  std::string corrupt;
};

int cmd_losscheck(const LosscheckArgs& a, std::ostream& out) {
  gradcheck::CheckOptions opt;
  opt.seed = a.seed;
  opt.coordinates = a.coordinates;
  if (!a.corrupt.empty()) opt.corrupt = a.corrupt;
  bool ok = true;
  char line[256];
  for (const auto& r : gradcheck::run_loss_checks(opt)) {
    const bool pass = r.max_gradient_error < gradcheck::kGradientTolerance &&
                      r.loss_difference < gradcheck::kLossTolerance && r.coordinates > 0;
    ok = ok && pass;
    std::snprintf(line, sizeof line, "%-24s max_rel_grad_err=%.3e loss_diff=%.3e coords=%zu %s\n",
                  r.name.c_str(), r.max_gradient_error, r.loss_difference, r.coordinates,
                  pass ? "ok" : "FAIL");
    out << line;
  }
  return ok ? kOk : kNumerical;
}

struct GenSceneArgs {
  std::string spec, out_dir, shape;
  std::optional<std::size_t> points;
  std::optional<double> overlap, noise, outliers;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_scene(const GenSceneArgs& a, std::ostream& out) {
  SceneSpec spec = a.spec.empty() ? SceneSpec{} : scene_spec_from_json(read_json(a.spec));
  if (!a.shape.empty()) spec.shape = shape_from_string(a.shape);
  if (a.points) spec.points = *a.points;
  if (a.overlap) spec.overlap = *a.overlap;
  if (a.noise) spec.noise_sigma = *a.noise;
  if (a.outliers) spec.outlier_fraction = *a.outliers;
  if (a.seed) spec.seed = *a.seed;
  const Scene scene = generate_scene(spec);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  io::write_cloud(dir / "src.ply", scene.src);
  io::write_cloud(dir / "tgt.ply", scene.tgt);
  io::write_transform(dir / "gt.json", scene.gt);
  json meta = {{"spec", to_json(spec)},
               {"measured_overlap", scene.measured_overlap},
               {"src_overlap_mask", scene.src_overlap_mask}};
  std::ofstream(dir / "scene.json") << meta.dump(2) << "\n";
  out << "wrote " << (dir / "src.ply").string() << " (" << scene.src.size() << " points), "
      << (dir / "tgt.ply").string() << " (" << scene.tgt.size()
      << " points), measured overlap " << scene.measured_overlap << "\n";
  return kOk;
}

struct BenchPair {
  std::string label;
  PointCloud src, tgt;
  RigidTransform gt;
};

std::vector<BenchPair> load_bench_pairs(const json& spec, const fs::path& base) {
  std::vector<BenchPair> pairs;
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  if (spec.contains("pairs")) {
    if (!spec.at("pairs").is_array()) throw ValidationError("bench 'pairs' must be an array");
    for (const auto& entry : spec.at("pairs")) {
      BenchPair bp;
      bp.label = "pair_" + std::to_string(pairs.size());
      if (entry.contains("scene")) {
        Scene sc = generate_scene(scene_spec_from_json(entry.at("scene")));
        bp.src = std::move(sc.src);
        bp.tgt = std::move(sc.tgt);
        bp.gt = sc.gt;
      } else {
        if (!entry.contains("src") || !entry.contains("tgt") || !entry.contains("gt")) {
          throw ValidationError("bench pair needs 'scene' or 'src', 'tgt' and 'gt'");
        }
        bp.src = io::read_cloud(resolve(entry.at("src").get<std::string>()));
        bp.tgt = io::read_cloud(resolve(entry.at("tgt").get<std::string>()));
        const auto& g = entry.at("gt");
        bp.gt = g.is_string() ? io::read_transform(resolve(g.get<std::string>()))
                              : transform_from_json(g);
        bp.label = entry.at("src").get<std::string>();
      }
      if (entry.contains("label")) bp.label = entry.at("label").get<std::string>();
      pairs.push_back(std::move(bp));
    }
  }
  if (spec.contains("generate")) {
    const auto& g = spec.at("generate");
    const std::size_t count = g.value("count", std::size_t{0});
    const std::uint64_t seed = g.value("seed", std::uint64_t{0});
    const SceneSpec base_spec = g.contains("scene") ? scene_spec_from_json(g.at("scene")) : SceneSpec{};
    for (std::size_t i = 0; i < count; ++i) {
      SceneSpec s = base_spec;
      s.seed = mix_seed(seed, i);
      Scene sc = generate_scene(s);
      pairs.push_back({"scene_" + std::to_string(i), std::move(sc.src), std::move(sc.tgt), sc.gt});
    }
  }
  return pairs;
}

struct BenchArgs {
  std::string spec, config, out, samples;
  std::optional<std::uint64_t> seed;
  bool keep_going = false;
};

std::vector<std::size_t> parse_samples(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("--samples: bad count '" + item + "'");
    }
  }
  return out;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const json spec = read_json(a.spec);
  RunConfig cfg;
  if (!a.config.empty()) {
    cfg = load_run_config(a.config);
  } else if (spec.contains("config")) {
    cfg = run_config_from_json(spec.at("config"));
  }
  if (a.seed) cfg.seed = *a.seed;
  validate(cfg);

  std::vector<std::size_t> samples;
  if (!a.samples.empty()) {
    samples = parse_samples(a.samples);
  } else if (spec.contains("samples")) {
    samples = spec.at("samples").get<std::vector<std::size_t>>();
  } else {
    samples = {cfg.matching.coarse_samples};
  }
  if (samples.empty()) throw ValidationError("bench: no sample counts");

  const auto pairs = load_bench_pairs(spec, fs::path(a.spec).parent_path());
  if (pairs.empty()) throw ValidationError("bench: the pair list is empty");

  BenchmarkReport report;
  report.thresholds = cfg.metrics;
  for (std::size_t n : samples) {
    MetricBlock block;
    block.samples = n;
    RegistrationConfig rc = cfg.registration();
    rc.matching.coarse_samples = n;
    for (const auto& p : pairs) {
      block.pair_labels.push_back(p.label);
      try {
        const auto result = register_clouds(p.src, p.tgt, rc);
        block.pairs.push_back(evaluate_pair(result, p.src, p.tgt, p.gt, cfg.metrics));
        block.failures.emplace_back();
      } catch (const Error& e) {
        const bool fatal = exit_code(e.kind()) == kValidation;
        if (fatal && !a.keep_going) {
          throw Error(e.kind(), p.label + " (" + std::to_string(n) + " samples): " + e.what());
        }
        err << p.label << " (" << n << " samples) failed: " << e.what() << "\n";
        block.pairs.push_back({});
        block.failures.emplace_back(e.what());
      }
    }
    aggregate(block, cfg.metrics);
    report.blocks.push_back(std::move(block));
  }

  out << format_table(report);
  if (!a.out.empty()) emit(a.out, out, to_json(report).dump(2) + "\n");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical point cloud registration toolkit", "hireg"};
  app.require_subcommand(1);

  RegisterArgs reg;
  auto* c_reg = app.add_subcommand("register", "Register a source cloud onto a target cloud");
  c_reg->add_option("--src", reg.src, "Source cloud (.ply or .xyz)")->required();
  c_reg->add_option("--tgt", reg.tgt, "Target cloud (.ply or .xyz)")->required();
  c_reg->add_option("--gt", reg.gt, "Ground-truth transform JSON; adds error metrics");
  c_reg->add_option("--config", reg.config, "Run configuration JSON");
  c_reg->add_option("--seed", reg.seed, "Override the configured seed");
  c_reg->add_option("--out", reg.out, "Result JSON path (default stdout)");

  LabelsArgs lab;
  auto* c_lab = app.add_subcommand("labels", "Matchability labels and keypoint rankings per anchor");
  c_lab->add_option("--src", lab.src, "Source cloud")->required();
  c_lab->add_option("--tgt", lab.tgt, "Target cloud")->required();
  c_lab->add_option("--gt", lab.gt, "Ground-truth transform JSON")->required();
  c_lab->add_option("--config", lab.config, "Run configuration JSON");
  c_lab->add_option("--seed", lab.seed, "Override the configured seed");
  c_lab->add_option("--samples", lab.samples, "Anchor count n_p");
  c_lab->add_option("--out", lab.out, "JSON Lines output path (default stdout)");
  c_lab->add_option("--src-low", lab.src_low, "Source low-level descriptor dump");
  c_lab->add_option("--src-high", lab.src_high, "Source high-level descriptor dump");
  c_lab->add_option("--tgt-low", lab.tgt_low, "Target low-level descriptor dump");
  c_lab->add_option("--tgt-high", lab.tgt_high, "Target high-level descriptor dump");

  LosscheckArgs lc;
  auto* c_lc = app.add_subcommand("losscheck", "Check training-loss values and gradients");
  c_lc->add_option("--seed", lc.seed, "Seed for the random problems");
  c_lc->add_option("--coordinates", lc.coordinates, "Coordinates checked per loss");
  c_lc->add_option("--corrupt-gradient", lc.corrupt)->group("");

  GenSceneArgs gs;
  auto* c_gs = app.add_subcommand("gen-scene", "Generate a synthetic source/target pair");
  c_gs->add_option("--spec", gs.spec, "Scene spec JSON");
  c_gs->add_option("--out", gs.out_dir, "Output directory")->required();
  c_gs->add_option("--shape", gs.shape, "plane, box or room");
  c_gs->add_option("--points", gs.points, "Source point count");
  c_gs->add_option("--overlap", gs.overlap, "Target overlap ratio");
  c_gs->add_option("--noise", gs.noise, "Gaussian noise sigma (m)");
  c_gs->add_option("--outliers", gs.outliers, "Outlier fraction");
  c_gs->add_option("--seed", gs.seed, "Scene seed");

  BenchArgs bn;
  auto* c_bn = app.add_subcommand("bench", "Run a benchmark over a list of pairs");
  c_bn->add_option("spec", bn.spec, "Benchmark spec JSON")->required();
  c_bn->add_option("--config", bn.config, "Run configuration JSON");
  c_bn->add_option("--seed", bn.seed, "Override the configured seed");
  c_bn->add_option("--samples", bn.samples, "Comma-separated coarse sample counts");
  c_bn->add_option("--out", bn.out, "Report JSON path");
  c_bn->add_flag("--keep-going", bn.keep_going, "Record failing pairs instead of aborting");

  // CLI11 consumes a reversed argument list without the program name.
  std::vector<std::string> rev;
  for (std::size_t i = args.size(); i-- > 1;) rev.push_back(args[i]);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    // Show help for the subcommand that failed when there is one.
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kValidation;
  }

  try {
    if (*c_reg) return cmd_register(reg, out);
    if (*c_lab) return cmd_labels(lab, out, err);
    if (*c_lc) return cmd_losscheck(lc, out);
    if (*c_gs) return cmd_gen_scene(gs, out);
    if (*c_bn) return cmd_bench(bn, out, err);
  } catch (const StageError& e) {
    err << "error [" << to_string(e.kind()) << "] " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "] " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error [validation] " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}

}  // namespace hireg::cli
