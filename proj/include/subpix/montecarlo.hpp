#ifndef SUBPIX_MONTECARLO_HPP
#define SUBPIX_MONTECARLO_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "subpix/detector.hpp"
#include "subpix/model.hpp"
#include "subpix/parallel.hpp"

namespace subpix {

// One simulated trial, ready for estimator evaluation. Estimators run on the
// same data so their outputs are directly comparable.
struct TrialData {
  Scene scene;
  BackgroundContext ctx;
  WhitenedProblem wp;
  double g_null = 0.0;  // objective at the all-background abundance
};

inline TrialData make_trial(SceneConfig cfg, const EndmemberLibrary& lib,
                            const AbundanceVector& truth,
                            std::uint64_t trial_seed) {
  cfg.seed = trial_seed;
  TrialData trial;
  trial.scene = generate_scene(cfg, lib, truth);
  trial.ctx = build_context(trial.scene.secondary);
  trial.wp = whiten(trial.ctx, trial.scene.put, lib);
  trial.g_null = abundance_objective(
      trial.wp, trial.ctx, Eigen::VectorXd::Zero(lib.count()));
  return trial;
}

struct TrialOutput {
  Eigen::VectorXd alpha;
  double statistic = 0.0;
  EstimateTrace trace;
};

inline TrialOutput evaluate_trial(const TrialData& trial, EstimatorKind kind,
                                  const EstimatorConfig& cfg) {
  TrialOutput out;
  out.trace = run_estimator(kind, trial.wp, trial.ctx, cfg);
  out.alpha = out.trace.alpha_hat.values();
  out.statistic =
      trial.g_null - abundance_objective(trial.wp, trial.ctx, out.alpha);
  return out;
}

struct MonteCarloSummary {
  Eigen::VectorXd alpha_mean;
  double rmse = 0.0;  // sqrt(mean ||alpha_hat - truth||^2 / r)
  std::vector<double> statistics;       // one per trial
  std::vector<double> mean_delta_l1;    // per iteration ([0] unused)
  std::vector<Eigen::VectorXd> alphas;  // one per trial
};

// Runs several estimator configurations over a shared set of trials.
// Per-trial seeds derive from (cfg.seed, trial index) and reductions happen
// in index order, so results are independent of the thread count.
inline std::vector<MonteCarloSummary> run_monte_carlo_multi(
    const SceneConfig& cfg, const EndmemberLibrary& lib,
    const AbundanceVector& truth,
    const std::vector<std::pair<EstimatorKind, EstimatorConfig>>& runs,
    int trials, int threads) {
  const int r = lib.count();
  const int n_runs = static_cast<int>(runs.size());
  std::vector<std::vector<TrialOutput>> outputs(
      n_runs, std::vector<TrialOutput>(trials));
  parallel_for(trials, threads, [&](std::size_t i) {
    const TrialData trial =
        make_trial(cfg, lib, truth, derive_seed(cfg.seed, i));
    for (int k = 0; k < n_runs; ++k)
      outputs[k][i] = evaluate_trial(trial, runs[k].first, runs[k].second);
  });

  std::vector<MonteCarloSummary> summaries(n_runs);
  for (int k = 0; k < n_runs; ++k) {
    MonteCarloSummary& s = summaries[k];
    const int n_iter = runs[k].second.n_iter;
    s.alpha_mean = Eigen::VectorXd::Zero(r);
    s.statistics.reserve(trials);
    s.alphas.reserve(trials);
    s.mean_delta_l1.assign(n_iter, 0.0);
    double sq = 0.0;
    for (const auto& o : outputs[k]) {
      s.alpha_mean += o.alpha;
      sq += (o.alpha - truth.values()).squaredNorm();
      s.statistics.push_back(o.statistic);
      s.alphas.push_back(o.alpha);
      for (int h = 1; h < n_iter && h < static_cast<int>(o.trace.delta_l1.size()); ++h)
        s.mean_delta_l1[h] += o.trace.delta_l1[h];
    }
    s.alpha_mean /= trials;
    s.rmse = std::sqrt(sq / (static_cast<double>(trials) * r));
    for (int h = 1; h < static_cast<int>(s.mean_delta_l1.size()); ++h)
      s.mean_delta_l1[h] /= trials;
    if (!s.mean_delta_l1.empty())
      s.mean_delta_l1[0] = std::numeric_limits<double>::quiet_NaN();
  }
  return summaries;
}

inline MonteCarloSummary run_monte_carlo(const SceneConfig& cfg,
                                         const EndmemberLibrary& lib,
                                         const AbundanceVector& truth,
                                         EstimatorKind kind,
                                         const EstimatorConfig& ecfg,
                                         int trials, int threads) {
  return run_monte_carlo_multi(cfg, lib, truth, {{kind, ecfg}}, trials,
                               threads)[0];
}

// Background-only cube with i.i.d. Gaussian pixels; the raw material for
// sliding-window experiments.
inline HyperCube generate_background_cube(int rows, int cols, int n_bands,
                                          double noise_variance,
                                          const Eigen::VectorXd& mean,
                                          std::uint64_t seed) {
  if (rows < 1 || cols < 1 || n_bands < 1)
    throw config_error("generate_background_cube: bad dimensions");
  if (mean.size() != 0 && mean.size() != n_bands)
    throw config_error("generate_background_cube: mean length mismatch");
  HyperCube cube;
  cube.rows = rows;
  cube.cols = cols;
  cube.bands = n_bands;
  cube.data.resize(static_cast<std::size_t>(rows) * cols * n_bands);
  cube.mask_applied = true;
  const double sd = std::sqrt(noise_variance);
  GaussianStream rng(seed);
  for (int row = 0; row < rows; ++row)
    for (int col = 0; col < cols; ++col)
      for (int b = 0; b < n_bands; ++b) {
        const double mu = mean.size() ? mean[b] : 0.0;
        cube.at(row, col, b) = mu + sd * rng.normal();
      }
  return cube;
}

// Replaces a cube pixel with a filled pixel: targets plus the proportional
// remainder of the original spectrum.
inline void inject_filled_pixel(HyperCube& cube, int row, int col,
                                const EndmemberLibrary& lib,
                                const AbundanceVector& alpha) {
  if (lib.bands() != cube.bands)
    throw data_error("inject_filled_pixel: band count mismatch");
  const Eigen::VectorXd filled = synthesize_pixel(lib, alpha, cube.pixel(row, col));
  for (int b = 0; b < cube.bands; ++b) cube.at(row, col, b) = filled[b];
}

}  // namespace subpix

#endif  // SUBPIX_MONTECARLO_HPP
