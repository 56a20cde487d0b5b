// Command-line front end: reproducible simulation, estimation, detection,
// and threshold calibration experiments over synthetic scenes or ENVI cubes.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "subpix/detector.hpp"
#include "subpix/io.hpp"
#include "subpix/montecarlo.hpp"
#include "subpix/version.hpp"

namespace {

using nlohmann::json;
using namespace subpix;

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',' || c == ' ') {
      if (!cur.empty()) {
        out.push_back(std::stod(cur));
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> parse_rows(const std::string& s) {
  std::vector<Eigen::VectorXd> rows;
  std::string cur;
  for (char c : s + ";") {
    if (c == ';') {
      if (!cur.empty()) {
        const auto v = parse_doubles(cur);
        rows.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  return rows;
}

BackgroundGrid parse_bg_grid(const std::string& s) {
  double v[3];
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &v[0], &v[1], &v[2]) != 3)
    throw config_error("--bg-grid expects start:stop:step");
  return BackgroundGrid{v[0], v[1], v[2]};
}

PixelRegion parse_region(const std::string& s) {
  PixelRegion r;
  if (std::sscanf(s.c_str(), "%d:%d,%d:%d", &r.row_begin, &r.row_end,
                  &r.col_begin, &r.col_end) != 4)
    throw config_error("--region expects row0:row1,col0:col1 (half-open)");
  return r;
}

std::optional<BandMask> parse_band_mask(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  if (s == "default") return BandMask::standard();
  BandMask m;
  for (double v : parse_doubles(s)) m.dropped.insert(static_cast<int>(v));
  return m;
}

std::vector<EstimatorKind> parse_estimators(const std::string& s) {
  if (s == "heuristic") return {EstimatorKind::heuristic};
  if (s == "constrained") return {EstimatorKind::constrained};
  if (s == "both") return {EstimatorKind::heuristic, EstimatorKind::constrained};
  throw config_error("--estimator must be heuristic, constrained, or both");
}

// Options shared by the subcommands; serialized in full into every output.
struct Options {
  int n_bands = 116;
  int k_secondary = 625;
  double noise_variance = 0.5;
  std::uint64_t seed = 1;
  int trials = 100;
  int h0_trials = 2000;
  double pfa = 1e-3;
  std::string estimator = "both";
  int n_iter = 15;
  std::string bg_grid = "0.1:0.9:0.01";
  int root_grid_points = 2048;
  double root_tol = 1e-12;
  int bg_window = 55;
  int guard_window = 3;
  int subsample = 0;
  int threads = 1;
  std::string band_mask = "none";
  std::string library_path;
  int synthetic_endmembers = 3;
  double signature_scale = 1.0;
  std::string out;

  EstimatorConfig estimator_cfg() const {
    EstimatorConfig e;
    e.n_iter = n_iter;
    e.bg_grid = parse_bg_grid(bg_grid);
    e.root_grid_points = root_grid_points;
    e.root_tol = root_tol;
    return e;
  }

  SceneConfig scene_cfg() const {
    SceneConfig s;
    s.n_bands = n_bands;
    s.k_secondary = k_secondary;
    s.noise_variance = noise_variance;
    s.seed = seed;
    return s;
  }

  // Library files carry pre-mask band counts, so the mask applies to them;
  // synthetic libraries are generated directly at the retained band count
  // (the cube's when one is loaded).
  EndmemberLibrary load_library(int bands_hint = 0) const {
    EndmemberLibrary lib = [&] {
      if (!library_path.empty()) {
        EndmemberLibrary from_file = read_spectral_library(library_path);
        if (const auto mask = parse_band_mask(band_mask))
          from_file = apply_band_mask(from_file, *mask);
        return from_file;
      }
      return synthetic_library(bands_hint > 0 ? bands_hint : n_bands,
                               synthetic_endmembers, seed);
    }();
    if (signature_scale != 1.0)
      lib = EndmemberLibrary(lib.signatures() * signature_scale, lib.names());
    return lib;
  }

  json to_json(const std::string& subcommand) const {
    return json{{"tool", kVersion},
                {"subcommand", subcommand},
                {"n_bands", n_bands},
                {"k_secondary", k_secondary},
                {"noise_variance", noise_variance},
                {"seed", seed},
                {"trials", trials},
                {"h0_trials", h0_trials},
                {"pfa", pfa},
                {"estimator", estimator},
                {"n_iter", n_iter},
                {"bg_grid", bg_grid},
                {"root_grid_points", root_grid_points},
                {"root_tol", root_tol},
                {"bg_window", bg_window},
                {"guard_window", guard_window},
                {"subsample", subsample},
                {"threads", threads},
                {"band_mask", band_mask},
                {"library", library_path},
                {"synthetic_endmembers", synthetic_endmembers},
                {"signature_scale", signature_scale},
                {"out", out}};
  }
};

void add_scene_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--n-bands", o.n_bands, "Spectral bands of synthetic scenes");
  cmd->add_option("--k", o.k_secondary, "Secondary pixels per synthetic scene");
  cmd->add_option("--noise-var", o.noise_variance, "Background noise variance");
  cmd->add_option("--seed", o.seed, "Base random seed");
}

void add_estimator_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--estimator", o.estimator,
                  "heuristic, constrained, or both");
  cmd->add_option("--n-iter", o.n_iter, "Outer iterations");
  cmd->add_option("--bg-grid", o.bg_grid,
                  "Background abundance grid start:stop:step");
  cmd->add_option("--root-grid-points", o.root_grid_points,
                  "Bracketing points of the constrained root search");
  cmd->add_option("--root-tol", o.root_tol, "Bisection tolerance");
}

void add_library_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--library", o.library_path, "Spectral library file");
  cmd->add_option("--synthetic-endmembers", o.synthetic_endmembers,
                  "Endmember count of the synthetic library");
  cmd->add_option("--signature-scale", o.signature_scale,
                  "Extra scale applied to library signatures");
  cmd->add_option("--band-mask", o.band_mask,
                  "none, default, or comma-separated 1-based band indices");
}

void add_window_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--bg-window", o.bg_window, "Background window side (odd)");
  cmd->add_option("--guard-window", o.guard_window, "Guard window side (odd)");
  cmd->add_option("--subsample", o.subsample,
                  "Keep only this many annulus pixels (0 = all)");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path);
  out << text;
  if (!out) throw data_error("write failed: " + path);
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

DetectorConfig detector_cfg(const Options& o, EstimatorKind kind) {
  DetectorConfig d;
  d.estimator = kind;
  d.estimator_cfg = o.estimator_cfg();
  d.bg_window = o.bg_window;
  d.guard_window = o.guard_window;
  if (o.subsample > 0) d.secondary_subsample = o.subsample;
  d.threads = o.threads;
  return d;
}

// ---------------------------------------------------------------------------
// simulate: Monte-Carlo estimation and detection study over abundance rows.
// ---------------------------------------------------------------------------
int cmd_simulate(const Options& o, const std::string& rows_arg) {
  const EndmemberLibrary lib = o.load_library();
  std::vector<Eigen::VectorXd> rows =
      rows_arg.empty() ? default_abundance_rows() : parse_rows(rows_arg);
  for (const auto& row : rows)
    if (row.size() != lib.count())
      throw config_error("abundance row size does not match library");

  const auto kinds = parse_estimators(o.estimator);
  std::vector<std::pair<EstimatorKind, EstimatorConfig>> runs;
  for (auto k : kinds) runs.emplace_back(k, o.estimator_cfg());

  SceneConfig scene = o.scene_cfg();
  scene.n_bands = lib.bands();

  // Null-hypothesis ensemble for the detection thresholds.
  SceneConfig h0_scene = scene;
  h0_scene.seed = derive_seed(o.seed, 0xB0C0);
  const auto h0 = run_monte_carlo_multi(h0_scene, lib,
                                        AbundanceVector::zeros(lib.count()),
                                        runs, o.h0_trials, o.threads);
  std::vector<double> thresholds;
  bool undersampled = false;
  for (const auto& s : h0) {
    bool u = false;
    thresholds.push_back(calibrate_threshold(s.statistics, o.pfa, &u));
    undersampled = undersampled || u;
  }
  if (undersampled)
    std::cerr << "warning: fewer than 1/pfa null trials; threshold is coarse\n";

  std::string estimates = "estimator,sum_true";
  for (int i = 0; i < lib.count(); ++i) estimates += ",alpha_true_" + std::to_string(i);
  for (int i = 0; i < lib.count(); ++i) estimates += ",alpha_mean_" + std::to_string(i);
  estimates += ",rmse\n";
  std::string convergence = "estimator,sum_true,iteration,mean_delta_l1\n";
  std::string detection = "estimator,sum_true,pd,pfa,threshold\n";

  for (std::size_t row_i = 0; row_i < rows.size(); ++row_i) {
    const AbundanceVector truth(rows[row_i]);
    SceneConfig row_scene = scene;
    row_scene.seed = derive_seed(o.seed, row_i + 1);
    const auto res =
        run_monte_carlo_multi(row_scene, lib, truth, runs, o.trials, o.threads);
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const auto& s = res[k];
      const char* name = to_string(runs[k].first);
      estimates += std::string(name) + "," + g17(truth.sum());
      for (int i = 0; i < lib.count(); ++i) estimates += "," + g17(truth[i]);
      for (int i = 0; i < lib.count(); ++i) estimates += "," + g17(s.alpha_mean[i]);
      estimates += "," + g17(s.rmse) + "\n";
      for (std::size_t h = 1; h < s.mean_delta_l1.size(); ++h)
        convergence += std::string(name) + "," + g17(truth.sum()) + "," +
                       std::to_string(h + 1) + "," + g17(s.mean_delta_l1[h]) + "\n";
      int detected = 0;
      for (double st : s.statistics)
        if (st > thresholds[k]) ++detected;
      detection += std::string(name) + "," + g17(truth.sum()) + "," +
                   g17(static_cast<double>(detected) / o.trials) + "," +
                   g17(o.pfa) + "," + g17(thresholds[k]) + "\n";
    }
  }

  const json meta = o.to_json("simulate");
  const std::string tag = "run: " + meta.dump();
  namespace fs = std::filesystem;
  fs::create_directories(o.out);
  write_text(o.out + "/estimates.csv", "# " + tag + "\n" + estimates);
  write_text(o.out + "/convergence.csv", "# " + tag + "\n" + convergence);
  write_text(o.out + "/detection.csv", "# " + tag + "\n" + detection);
  write_text(o.out + "/meta.json", meta.dump(2) + "\n");
  std::cout << "simulate: wrote estimates.csv, convergence.csv, detection.csv to "
            << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate: abundance estimates for one pixel (cube or synthetic).
// ---------------------------------------------------------------------------
int cmd_estimate(const Options& o, const std::string& cube_header,
                 const std::string& cube_data, const std::string& pixel_arg,
                 const std::string& alpha_arg) {
  Eigen::VectorXd y;
  BackgroundContext ctx;
  std::optional<EndmemberLibrary> lib_holder;

  json source;
  if (!cube_header.empty()) {
    if (pixel_arg.empty()) throw config_error("--pixel required with --cube");
    int row, col;
    if (std::sscanf(pixel_arg.c_str(), "%d,%d", &row, &col) != 2)
      throw config_error("--pixel expects row,col");
    HyperCube cube = read_cube(cube_header, cube_data);
    if (const auto mask = parse_band_mask(o.band_mask))
      cube = apply_band_mask(cube, *mask);
    lib_holder = o.load_library(cube.bands);
    const EndmemberLibrary& lib = *lib_holder;
    if (cube.bands != lib.bands())
      throw data_error("cube and library band counts differ");
    DetectorConfig d = detector_cfg(o, EstimatorKind::constrained);
    const int half = d.bg_window / 2;
    if (row < half || row >= cube.rows - half || col < half ||
        col >= cube.cols - half)
      throw config_error("pixel too close to the border for the window");
    ctx = build_context(extract_annulus(cube, row, col, d));
    y = cube.pixel(row, col);
    source = {{"cube", cube_header}, {"pixel", {row, col}}};
  } else {
    if (alpha_arg.empty())
      throw config_error("either --cube or --alpha must be given");
    lib_holder = o.load_library();
    const EndmemberLibrary& lib = *lib_holder;
    const auto a = parse_doubles(alpha_arg);
    const AbundanceVector truth(
        Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()));
    if (truth.size() != lib.count())
      throw config_error("--alpha size does not match library");
    SceneConfig scene = o.scene_cfg();
    scene.n_bands = lib.bands();
    const TrialData trial = make_trial(scene, lib, truth, o.seed);
    ctx = trial.ctx;
    y = trial.scene.put;
    source = {{"synthetic_alpha", a}};
  }

  const EndmemberLibrary& lib = *lib_holder;
  const WhitenedProblem wp = whiten(ctx, y, lib);
  const double g_null =
      abundance_objective(wp, ctx, Eigen::VectorXd::Zero(lib.count()));

  json report;
  report["meta"] = o.to_json("estimate");
  report["meta"]["source"] = source;
  for (auto kind : parse_estimators(o.estimator)) {
    const EstimateTrace trace = run_estimator(kind, wp, ctx, o.estimator_cfg());
    const double stat =
        g_null - abundance_objective(wp, ctx, trace.alpha_hat.values());
    std::cout << to_string(kind) << ": alpha_hat = [";
    for (int i = 0; i < trace.alpha_hat.size(); ++i)
      std::cout << (i ? ", " : "") << trace.alpha_hat[i];
    std::cout << "]  statistic = " << stat
              << "  iterations = " << trace.iterations_run
              << "  final_delta_l1 = " << trace.delta_l1.back() << "\n";
    json jr;
    jr["alpha_hat"] = std::vector<double>(
        trace.alpha_hat.values().data(),
        trace.alpha_hat.values().data() + trace.alpha_hat.size());
    jr["statistic"] = stat;
    jr["l1_per_iteration"] = trace.l1_per_iteration;
    std::vector<double> deltas(trace.delta_l1.begin() + 1, trace.delta_l1.end());
    jr["delta_l1"] = deltas;
    jr["converged"] = trace.converged;
    report[to_string(kind)] = std::move(jr);
  }
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// detect: sliding-window detection over a cube.
// ---------------------------------------------------------------------------
int cmd_detect(const Options& o, const std::string& cube_header,
               const std::string& cube_data, const std::string& region_arg,
               const std::vector<std::string>& injections,
               std::optional<double> threshold,
               const std::string& threshold_file) {
  HyperCube cube = read_cube(cube_header, cube_data);
  if (const auto mask = parse_band_mask(o.band_mask))
    cube = apply_band_mask(cube, *mask);
  EndmemberLibrary lib = o.load_library(cube.bands);

  for (const auto& inj : injections) {
    const auto v = parse_doubles(inj);
    if (static_cast<int>(v.size()) != 2 + lib.count())
      throw config_error("--inject expects row,col,alpha_1..alpha_r");
    const AbundanceVector alpha(
        Eigen::Map<const Eigen::VectorXd>(v.data() + 2, lib.count()));
    inject_filled_pixel(cube, static_cast<int>(v[0]), static_cast<int>(v[1]),
                        lib, alpha);
  }

  if (!threshold_file.empty()) {
    std::ifstream in(threshold_file);
    if (!in) throw data_error("cannot open threshold file " + threshold_file);
    json j;
    in >> j;
    threshold = j.at("threshold").get<double>();
  }

  const auto kinds = parse_estimators(o.estimator);
  if (kinds.size() != 1)
    throw config_error("detect needs a single --estimator");
  DetectorConfig d = detector_cfg(o, kinds[0]);
  d.threshold = threshold;

  std::optional<PixelRegion> region;
  if (!region_arg.empty()) region = parse_region(region_arg);
  const DetectionGrid grid = sliding_detect(cube, lib, d, region);

  json meta = o.to_json("detect");
  meta["cube"] = cube_header;
  if (threshold) meta["threshold"] = *threshold;
  const auto records = grid.records();
  write_results_csv(records, o.out + ".csv", "run: " + meta.dump());
  write_results_json(records, meta, o.out + ".json");

  std::size_t flagged = 0, valid = 0;
  for (const auto& c : grid.cells) {
    valid += c.valid;
    flagged += c.decision && *c.decision;
  }
  std::cout << "detect: " << valid << " valid pixels";
  if (threshold) std::cout << ", " << flagged << " above threshold";
  std::cout << "; wrote " << o.out << ".csv and .json\n";
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate: detection threshold from a cube region or a synthetic ensemble.
// ---------------------------------------------------------------------------
int cmd_calibrate(const Options& o, const std::string& cube_header,
                  const std::string& cube_data, const std::string& region_arg,
                  bool simulate) {
  const auto kinds = parse_estimators(o.estimator);
  if (kinds.size() != 1)
    throw config_error("calibrate needs a single --estimator");

  std::vector<double> stats;
  if (simulate) {
    const EndmemberLibrary lib = o.load_library();
    SceneConfig scene = o.scene_cfg();
    scene.n_bands = lib.bands();
    scene.seed = derive_seed(o.seed, 0xB0C0);
    const auto s = run_monte_carlo(scene, lib, AbundanceVector::zeros(lib.count()),
                                   kinds[0], o.estimator_cfg(), o.h0_trials,
                                   o.threads);
    stats = s.statistics;
  } else {
    if (cube_header.empty() || region_arg.empty())
      throw config_error("calibrate needs --cube + --region, or --simulate");
    HyperCube cube = read_cube(cube_header, cube_data);
    if (const auto mask = parse_band_mask(o.band_mask))
      cube = apply_band_mask(cube, *mask);
    const EndmemberLibrary lib = o.load_library(cube.bands);
    const DetectionGrid grid =
        sliding_detect(cube, lib, detector_cfg(o, kinds[0]), parse_region(region_arg));
    for (const auto& c : grid.cells)
      if (c.valid) stats.push_back(c.statistic);
    if (stats.empty())
      throw config_error("calibrate: region contains no valid pixels");
  }

  bool undersampled = false;
  const double thr = calibrate_threshold(stats, o.pfa, &undersampled);
  if (undersampled)
    std::cerr << "warning: only " << stats.size()
              << " statistics for pfa = " << o.pfa << "; threshold is coarse\n";

  json out;
  out["threshold"] = thr;
  out["pfa"] = o.pfa;
  out["samples"] = stats.size();
  out["undersampled"] = undersampled;
  out["config"] = o.to_json("calibrate");
  write_text(o.out, out.dump(2) + "\n");
  std::cout << "calibrate: threshold " << thr << " from " << stats.size()
            << " statistics -> " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval: estimators against the exhaustive grid oracle on random instances.
// ---------------------------------------------------------------------------
int cmd_eval(const Options& o, int instances, double grid_step, bool oracle) {
  const EndmemberLibrary lib = o.load_library();
  const auto kinds = parse_estimators(o.estimator);

  std::string csv = "instance,estimator,g_value,g_oracle,gap";
  for (int i = 0; i < lib.count(); ++i) csv += ",alpha_" + std::to_string(i);
  csv += "\n";
  double max_gap = 0.0;

  for (int inst = 0; inst < instances; ++inst) {
    GaussianStream rng(derive_seed(o.seed, 7000 + inst));
    Eigen::VectorXd truth(lib.count());
    for (int i = 0; i < lib.count(); ++i)
      truth[i] = (0.05 + 0.75 * rng.uniform()) / lib.count();
    SceneConfig scene = o.scene_cfg();
    scene.n_bands = lib.bands();
    const TrialData trial = make_trial(scene, lib, AbundanceVector(truth),
                                       derive_seed(o.seed, inst));
    double g_oracle = std::numeric_limits<double>::quiet_NaN();
    if (oracle)
      g_oracle = abundance_objective(
          trial.wp, trial.ctx, estimate_oracle(trial.wp, trial.ctx, grid_step));
    for (auto kind : kinds) {
      const auto outp = evaluate_trial(trial, kind, o.estimator_cfg());
      const double g = trial.g_null - outp.statistic;
      const double gap = oracle ? g - g_oracle : 0.0;
      max_gap = std::max(max_gap, gap);
      csv += std::to_string(inst) + "," + to_string(kind) + "," + g17(g) + "," +
             g17(g_oracle) + "," + g17(gap);
      for (int i = 0; i < lib.count(); ++i) csv += "," + g17(outp.alpha[i]);
      csv += "\n";
    }
  }
  if (!o.out.empty()) {
    const json meta = o.to_json("eval");
    write_text(o.out, "# run: " + meta.dump() + "\n" + csv);
  }
  std::cout << "eval: " << instances << " instances";
  if (oracle) std::cout << ", max objective gap vs oracle = " << max_gap;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GLRT detection of multiple sub-pixel targets under the "
               "generalized replacement model"};
  app.set_config("--config", "", "Read defaults from a config file");
  app.require_subcommand(1);

  Options o;
  std::string rows_arg, cube_header, cube_data, pixel_arg, alpha_arg;
  std::string region_arg, threshold_file;
  std::vector<std::string> injections;
  std::optional<double> threshold;
  int instances = 20;
  double grid_step = 0.01;
  bool oracle = false, simulate_h0 = false;

  auto* sim = app.add_subcommand("simulate", "Monte-Carlo estimation/detection study");
  add_scene_options(sim, o);
  add_estimator_options(sim, o);
  add_library_options(sim, o);
  sim->add_option("--trials", o.trials, "Trials per abundance row");
  sim->add_option("--h0-trials", o.h0_trials, "Null-hypothesis trials");
  sim->add_option("--pfa", o.pfa, "False-alarm probability for thresholds");
  sim->add_option("--rows", rows_arg, "Abundance rows 'a,b,c;d,e,f' (default: built-in ladder)");
  sim->add_option("--threads", o.threads, "Worker threads");
  sim->add_option("--out", o.out, "Output directory")->required();

  auto* est = app.add_subcommand("estimate", "Estimate abundances for one pixel");
  add_scene_options(est, o);
  add_estimator_options(est, o);
  add_library_options(est, o);
  add_window_options(est, o);
  est->add_option("--cube", cube_header, "ENVI header of the cube");
  est->add_option("--cube-data", cube_data, "Raw data file of the cube");
  est->add_option("--pixel", pixel_arg, "Pixel under test 'row,col'");
  est->add_option("--alpha", alpha_arg, "Synthetic truth abundances 'a,b,...'");
  est->add_option("--threads", o.threads, "Worker threads");
  est->add_option("--out", o.out, "JSON report path");

  auto* det = app.add_subcommand("detect", "Sliding-window detection over a cube");
  add_estimator_options(det, o);
  add_library_options(det, o);
  add_window_options(det, o);
  det->add_option("--cube", cube_header, "ENVI header of the cube")->required();
  det->add_option("--cube-data", cube_data, "Raw data file of the cube")->required();
  det->add_option("--region", region_arg, "Restrict to row0:row1,col0:col1");
  det->add_option("--inject", injections, "Filled pixel 'row,col,a1,..,ar'");
  det->add_option("--threshold", threshold, "Decision threshold");
  det->add_option("--threshold-file", threshold_file, "JSON file from calibrate");
  det->add_option("--threads", o.threads, "Worker threads");
  det->add_option("--seed", o.seed, "Seed recorded in metadata");
  det->add_option("--out", o.out, "Output path prefix")->required();

  auto* cal = app.add_subcommand("calibrate", "Compute a detection threshold");
  add_scene_options(cal, o);
  add_estimator_options(cal, o);
  add_library_options(cal, o);
  add_window_options(cal, o);
  cal->add_option("--cube", cube_header, "ENVI header of the cube");
  cal->add_option("--cube-data", cube_data, "Raw data file of the cube");
  cal->add_option("--region", region_arg, "Background region row0:row1,col0:col1");
  cal->add_flag("--simulate", simulate_h0, "Calibrate on a synthetic null ensemble");
  cal->add_option("--h0-trials", o.h0_trials, "Null-hypothesis trials");
  cal->add_option("--pfa", o.pfa, "False-alarm probability")->required();
  cal->add_option("--threads", o.threads, "Worker threads");
  cal->add_option("--out", o.out, "Threshold JSON path")->required();

  auto* ev = app.add_subcommand("eval", "Estimators vs the exhaustive grid oracle");
  add_scene_options(ev, o);
  add_estimator_options(ev, o);
  add_library_options(ev, o);
  ev->add_option("--instances", instances, "Random instances");
  ev->add_option("--grid-step", grid_step, "Oracle grid step");
  ev->add_flag("--oracle", oracle, "Run the exhaustive oracle");
  ev->add_option("--out", o.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, rows_arg);
    if (est->parsed())
      return cmd_estimate(o, cube_header, cube_data, pixel_arg, alpha_arg);
    if (det->parsed())
      return cmd_detect(o, cube_header, cube_data, region_arg, injections,
                        threshold, threshold_file);
    if (cal->parsed())
      return cmd_calibrate(o, cube_header, cube_data, region_arg, simulate_h0);
    if (ev->parsed()) return cmd_eval(o, instances, grid_step, oracle);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const singular_statistics_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
