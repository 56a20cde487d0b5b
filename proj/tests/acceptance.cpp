// Acceptance suite: end-to-end statistical and numerical gates, one
// pass/fail line per criterion. Exits nonzero if any criterion fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "subpix/detector.hpp"
#include "subpix/montecarlo.hpp"
#include "oracles.hpp"

using namespace subpix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  bool skipped = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const char* name, const Outcome& o, double seconds) {
  const char* tag = o.skipped ? "SKIP" : (o.pass ? "PASS" : "FAIL");
  std::printf("[%s] %2d. %s%s%s  [%.1f s]\n", tag, id, name,
              o.detail.empty() ? "" : ": ", o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.skipped && !o.pass) ++g_failures;
}

void run(int id, const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double dt =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report(id, name, o, dt);
}

EndmemberLibrary make_lib(const MatrixXd& sig) {
  std::vector<std::string> names;
  for (int i = 0; i < sig.cols(); ++i) names.push_back("t" + std::to_string(i + 1));
  return EndmemberLibrary(sig, names);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

constexpr int kThreads = 2;

// Abundance outputs collected across the statistical criteria; re-checked
// wholesale by the constraint criterion.
std::vector<Eigen::VectorXd> g_collected_alphas;
void collect(const MonteCarloSummary& s) {
  g_collected_alphas.insert(g_collected_alphas.end(), s.alphas.begin(),
                            s.alphas.end());
}

// --------------------------------------------------------------------------
// 1. Determinant factorization identity on random instances.
// --------------------------------------------------------------------------
Outcome criterion_identity() {
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    GaussianStream rng(derive_seed(0xA1, inst));
    const int n = 2 + static_cast<int>(rng.uniform() * 9);        // [2,10]
    const int k = n + 2 + static_cast<int>(rng.uniform() * (49 - n - 2));
    const int r = 1 + static_cast<int>(rng.uniform() * 3);
    const MatrixXd z = oracles::random_matrix(rng, n, k, 1.0, 0.2);
    const VectorXd y = oracles::random_vector(rng, n, 1.0, 0.2);
    const auto lib = make_lib(oracles::random_matrix(rng, n, r, 0.5, 0.3));
    const VectorXd alpha = oracles::random_alpha(rng, r);
    const BackgroundContext ctx = build_context(z);
    const auto [lhs, rhs] =
        scatter_determinant_identity(ctx, y, lib, AbundanceVector(alpha));
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  return {worst < 1e-9, false,
          fmt("max relative gap %.2e over 1000 instances (limit 1e-9)", worst)};
}

// --------------------------------------------------------------------------
// 2. Compressed likelihoods dominate perturbed parameters.
// --------------------------------------------------------------------------
Outcome criterion_mle_dominance() {
  double worst_slack = 1e300;
  for (int inst = 0; inst < 100; ++inst) {
    GaussianStream rng(derive_seed(0xA2, inst));
    const int n = 2 + static_cast<int>(rng.uniform() * 7);
    const int k = n + 2 + static_cast<int>(rng.uniform() * 30);
    const int r = 1 + static_cast<int>(rng.uniform() * 2);
    const VectorXd y = oracles::random_vector(rng, n, 1.0, 0.3);
    const MatrixXd z = oracles::random_matrix(rng, n, k, 1.0, 0.3);
    const auto lib = make_lib(oracles::random_matrix(rng, n, r, 0.5, 0.3));
    const VectorXd alpha = oracles::random_alpha(rng, r, 0.7);

    const double l0 = log_likelihood_h0(y, z);
    const VectorXd mu0 = oracles::mu0_hat(y, z);
    const MatrixXd m0 = oracles::m0_hat(y, z);

    const BackgroundContext ctx = build_context(z);
    const double l1 =
        log_likelihood_h1(ctx, y, lib, AbundanceVector(alpha));
    const VectorXd mu1 = oracles::mu1_hat(y, z, lib.signatures(), alpha);
    const MatrixXd m1 = oracles::m1_hat(y, z, lib.signatures(), alpha);

    for (int rep = 0; rep < 200; ++rep) {
      const VectorXd du = oracles::random_vector(rng, n, 0.15);
      const MatrixXd e = oracles::random_matrix(rng, n, n, 0.3);
      const MatrixXd dm = (e * e.transpose()) / n;
      const double f0 = oracles::log_density_h0(y, z, mu0 + du, m0 + dm);
      const double f1 = oracles::log_density_h1(y, z, lib.signatures(), alpha,
                                                mu1 + du, m1 + dm);
      worst_slack = std::min(worst_slack, l0 - f0);
      worst_slack = std::min(worst_slack, l1 - f1);
      if (l0 - f0 < -1e-9 || l1 - f1 < -1e-9)
        return {false, false,
                fmt("dominance violated by %.2e at instance %d",
                    std::min(l0 - f0, l1 - f1), inst)};
    }
  }
  return {true, false,
          fmt("maximizers dominate 100x200 perturbations under both "
              "hypotheses (min slack %.2e)", worst_slack)};
}

// --------------------------------------------------------------------------
// 3. Estimators track the exhaustive grid oracle.
// --------------------------------------------------------------------------
Outcome criterion_oracle_equivalence() {
  // One endmember: both estimators within 1e-3 of a 1e-4-step grid minimum.
  // The heuristic runs with a fine background grid so its candidate set has
  // comparable resolution.
  EstimatorConfig heur;
  heur.bg_grid = {0.005, 0.995, 0.001};
  EstimatorConfig cons;

  double worst1 = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    GaussianStream rng(derive_seed(0xA3, inst));
    const int n = 8 + static_cast<int>(rng.uniform() * 17);
    const int k = 2 * n + 4 + static_cast<int>(rng.uniform() * n);
    const auto lib =
        make_lib(oracles::random_matrix(rng, n, 1, 0.15, 0.4).cwiseAbs());
    VectorXd truth(1);
    truth << 0.15 + 0.65 * rng.uniform();
    SceneConfig cfg;
    cfg.n_bands = n;
    cfg.k_secondary = k;
    cfg.noise_variance = 0.5;
    const TrialData t =
        make_trial(cfg, lib, AbundanceVector(truth), derive_seed(0xB3, inst));
    const double g_oracle = abundance_objective(
        t.wp, t.ctx, estimate_oracle(t.wp, t.ctx, 1e-4));
    const double g_h = abundance_objective(
        t.wp, t.ctx, estimate_heuristic(t.wp, t.ctx, heur).alpha_hat);
    const double g_c = abundance_objective(
        t.wp, t.ctx, estimate_constrained(t.wp, t.ctx, cons).alpha_hat);
    worst1 = std::max({worst1, std::abs(g_h - g_oracle),
                       std::abs(g_c - g_oracle)});
  }
  if (worst1 >= 1e-3)
    return {false, false, fmt("r=1 worst gap %.2e (limit 1e-3)", worst1)};

  // Two endmembers against a 1e-2-step simplex grid. Correlated signatures
  // give a shallow exchange valley, so the cyclic sweeps get a larger
  // iteration budget to settle.
  heur.n_iter = 150;
  cons.n_iter = 150;
  double worst2 = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    GaussianStream rng(derive_seed(0xA4, inst));
    const int n = 10 + static_cast<int>(rng.uniform() * 10);
    const int k = 2 * n + 6 + static_cast<int>(rng.uniform() * n);
    const auto lib =
        make_lib(oracles::random_matrix(rng, n, 2, 0.15, 0.4).cwiseAbs());
    VectorXd truth(2);
    truth << 0.1 + 0.35 * rng.uniform(), 0.1 + 0.35 * rng.uniform();
    SceneConfig cfg;
    cfg.n_bands = n;
    cfg.k_secondary = k;
    cfg.noise_variance = 0.5;
    const TrialData t =
        make_trial(cfg, lib, AbundanceVector(truth), derive_seed(0xB4, inst));
    const double g_oracle = abundance_objective(
        t.wp, t.ctx, estimate_oracle(t.wp, t.ctx, 1e-2));
    const double g_h = abundance_objective(
        t.wp, t.ctx, estimate_heuristic(t.wp, t.ctx, heur).alpha_hat);
    const double g_c = abundance_objective(
        t.wp, t.ctx, estimate_constrained(t.wp, t.ctx, cons).alpha_hat);
    worst2 = std::max({worst2, g_h - g_oracle, g_c - g_oracle,
                       g_oracle - std::min(g_h, g_c)});
  }
  if (worst2 >= 5e-2)
    return {false, false, fmt("r=2 worst gap %.2e (limit 5e-2)", worst2)};
  return {true, false,
          fmt("worst objective gap vs oracle: r=1 %.2e (limit 1e-3), "
              "r=2 %.2e (limit 5e-2)", worst1, worst2)};
}

// --------------------------------------------------------------------------
// 4. Convergence traces at the benchmark configuration.
// --------------------------------------------------------------------------
Outcome criterion_convergence() {
  const auto lib = synthetic_library(116, 3, 20260808);
  SceneConfig cfg;
  cfg.n_bands = 116;
  cfg.k_secondary = 625;
  cfg.noise_variance = 0.5;
  EstimatorConfig heur;
  heur.n_iter = 15;
  EstimatorConfig cons;
  cons.n_iter = 25;

  std::string detail;
  for (double sum : {0.7, 0.9}) {
    VectorXd a(3);
    if (sum == 0.7)
      a << 0.50, 0.20, 0.0;
    else
      a << 0.60, 0.30, 0.0;
    cfg.seed = derive_seed(0xA5, static_cast<int>(sum * 10));
    const auto res = run_monte_carlo_multi(
        cfg, lib, AbundanceVector(a),
        {{EstimatorKind::heuristic, heur}, {EstimatorKind::constrained, cons}},
        100, kThreads);
    collect(res[0]);
    collect(res[1]);
    const double h5 = res[0].mean_delta_l1[4];    // iteration 5
    const double c25 = res[1].mean_delta_l1[24];  // iteration 25
    detail += fmt("sum %.1f: heuristic dL1@5 %.1e, constrained dL1@25 %.1e; ",
                  sum, h5, c25);
    if (!(h5 >= 1e-5 && h5 <= 1e-2))
      return {false, false, detail + "heuristic outside [1e-5, 1e-2]"};
    if (!(c25 < 1e-10))
      return {false, false, detail + "constrained not below 1e-10"};
  }
  return {true, false, detail + "within bounds"};
}

// --------------------------------------------------------------------------
// 5. Estimation quality over the abundance ladder.
// --------------------------------------------------------------------------
Outcome criterion_estimation_quality() {
  const auto lib = synthetic_library(116, 3, 20260808);
  SceneConfig cfg;
  cfg.n_bands = 116;
  cfg.k_secondary = 625;
  cfg.noise_variance = 0.5;
  EstimatorConfig ecfg;
  const auto rows = default_abundance_rows();
  const int trials = 200;

  double rmse_half[2] = {0, 0}, rmse_nine[2] = {0, 0};
  double worst_err = 0.0;
  for (const auto& row : rows) {
    const AbundanceVector truth(row);
    cfg.seed = derive_seed(0xA6, static_cast<int>(truth.sum() * 100));
    const auto res = run_monte_carlo_multi(
        cfg, lib, truth,
        {{EstimatorKind::heuristic, ecfg}, {EstimatorKind::constrained, ecfg}},
        trials, kThreads);
    for (int k = 0; k < 2; ++k) {
      collect(res[k]);
      if (truth.sum() >= 0.8 - 1e-12) {
        VectorXd mean_abs_err = VectorXd::Zero(3);
        for (const auto& alpha : res[k].alphas)
          mean_abs_err += (alpha - row).cwiseAbs();
        mean_abs_err /= trials;
        worst_err = std::max(worst_err, mean_abs_err.maxCoeff());
        if (mean_abs_err.maxCoeff() >= 0.1)
          return {false, false,
                  fmt("sum %.2f: per-component error %.3f (limit 0.1)",
                      truth.sum(), mean_abs_err.maxCoeff())};
      }
      if (std::abs(truth.sum() - 0.5) < 1e-9) rmse_half[k] = res[k].rmse;
      if (std::abs(truth.sum() - 0.9) < 1e-9) rmse_nine[k] = res[k].rmse;
    }
  }
  for (int k = 0; k < 2; ++k)
    if (!(rmse_nine[k] < rmse_half[k]))
      return {false, false,
              fmt("RMSE not decreasing: %.4f at 0.9 vs %.4f at 0.5",
                  rmse_nine[k], rmse_half[k])};
  return {true, false,
          fmt("worst per-component error %.3f at sums >= 0.8 (limit 0.1); "
              "RMSE 0.9 %.4f/%.4f < RMSE 0.5 %.4f",
              worst_err, rmse_nine[0], rmse_nine[1], rmse_half[0])};
}

// --------------------------------------------------------------------------
// 6. Detection probability at the benchmark false-alarm rate.
// --------------------------------------------------------------------------
Outcome criterion_detection() {
  const auto lib = synthetic_library(116, 3, 20260808);
  SceneConfig cfg;
  cfg.n_bands = 116;
  cfg.k_secondary = 625;
  cfg.noise_variance = 0.5;
  EstimatorConfig ecfg;
  const std::vector<std::pair<EstimatorKind, EstimatorConfig>> runs = {
      {EstimatorKind::heuristic, ecfg}, {EstimatorKind::constrained, ecfg}};

  cfg.seed = derive_seed(0xA7, 0);
  const int h0_trials = 20000;
  const auto h0 = run_monte_carlo_multi(cfg, lib, AbundanceVector::zeros(3),
                                        runs, h0_trials, kThreads);
  collect(h0[0]);
  collect(h0[1]);
  double thr[2];
  for (int k = 0; k < 2; ++k)
    thr[k] = calibrate_threshold(h0[k].statistics, 1e-3);

  std::string detail = fmt("thresholds %.3f / %.3f; ", thr[0], thr[1]);
  for (double sum : {0.6, 0.7}) {
    VectorXd a(3);
    if (sum == 0.6)
      a << 0.45, 0.15, 0.0;
    else
      a << 0.50, 0.20, 0.0;
    cfg.seed = derive_seed(0xA7, static_cast<int>(sum * 10));
    const auto h1 =
        run_monte_carlo_multi(cfg, lib, AbundanceVector(a), runs, 1000, kThreads);
    for (int k = 0; k < 2; ++k) {
      collect(h1[k]);
      int detected = 0;
      for (double s : h1[k].statistics) detected += s > thr[k];
      const double pd = detected / 1000.0;
      detail += fmt("sum %.1f ", sum) + to_string(runs[k].first) +
                fmt(" Pd %.3f; ", pd);
      if (!(pd > 0.9))
        return {false, false, detail + "below 0.9"};
    }
  }
  return {true, false, detail + "all above 0.9 at pfa 1e-3"};
}

// --------------------------------------------------------------------------
// 7. Filled-pixel study with a synthetic background cube.
// --------------------------------------------------------------------------
Outcome criterion_filled_pixel() {
  const int n_bands = 116;
  const auto lib = synthetic_library(n_bands, 2, 20260808);
  const HyperCube background = generate_background_cube(
      110, 76, n_bands, 0.5, VectorXd::Zero(n_bands), derive_seed(0xA8, 0));

  DetectorConfig det;
  det.estimator = EstimatorKind::constrained;
  det.bg_window = 55;
  det.guard_window = 3;
  det.threads = kThreads;

  // threshold from a 21x21 target-free region
  const DetectionGrid cal =
      sliding_detect(background, lib, det, PixelRegion{27, 48, 27, 48});
  std::vector<double> stats;
  for (const auto& c : cal.cells)
    if (c.valid) stats.push_back(c.statistic);
  const double thr = calibrate_threshold(stats, 1e-2);

  std::string detail = fmt("threshold %.3f from %.0f stats; ", thr,
                           static_cast<double>(stats.size()));
  const double configs[3][2] = {{0.50, 0.20}, {0.55, 0.25}, {0.60, 0.30}};
  for (const auto& c : configs) {
    HyperCube cube = background;
    VectorXd a(2);
    a << c[0], c[1];
    inject_filled_pixel(cube, 70, 40, lib, AbundanceVector(a));
    det.threshold = thr;
    const DetectionGrid hit =
        sliding_detect(cube, lib, det, PixelRegion{70, 71, 40, 41});
    const DetectionResult& res = hit.cells[0];
    g_collected_alphas.push_back(res.alpha_hat.values());
    const double e0 = std::abs(res.alpha_hat[0] - c[0]);
    const double e1 = std::abs(res.alpha_hat[1] - c[1]);
    detail += fmt("[%.2f,%.2f]->err(%.3f,%.3f) ", c[0], c[1], e0, e1);
    if (!(res.decision && *res.decision))
      return {false, false, detail + "filled pixel not detected"};
    if (e0 >= 0.15 || e1 >= 0.15)
      return {false, false, detail + "abundance error outside +/-0.15"};
  }
  return {true, false, detail + "all detected within tolerance"};
}

// --------------------------------------------------------------------------
// 8. Calibrated thresholds reproduce the requested false-alarm rate.
// --------------------------------------------------------------------------
int binomial_quantile(int n, double p, double q) {
  double log_pmf = n * std::log1p(-p);
  double cdf = std::exp(log_pmf);
  int k = 0;
  while (k < n && cdf < q) {
    log_pmf += std::log(static_cast<double>(n - k) / (k + 1)) + std::log(p) -
               std::log1p(-p);
    cdf += std::exp(log_pmf);
    ++k;
  }
  return k;
}

Outcome criterion_calibration() {
  const auto lib = synthetic_library(16, 2, 20260808);
  SceneConfig cfg;
  cfg.n_bands = 16;
  cfg.k_secondary = 80;
  cfg.noise_variance = 0.5;
  EstimatorConfig ecfg;
  const double pfa = 0.02;
  const int m_cal = 40000, m_test = 20000;

  cfg.seed = derive_seed(0xA9, 1);
  const auto cal = run_monte_carlo(cfg, lib, AbundanceVector::zeros(2),
                                   EstimatorKind::constrained, ecfg, m_cal,
                                   kThreads);
  collect(cal);
  const double thr = calibrate_threshold(cal.statistics, pfa);

  cfg.seed = derive_seed(0xA9, 2);
  const auto test = run_monte_carlo(cfg, lib, AbundanceVector::zeros(2),
                                    EstimatorKind::constrained, ecfg, m_test,
                                    kThreads);
  collect(test);
  int exceed = 0;
  for (double s : test.statistics) exceed += s > thr;
  const int lo = binomial_quantile(m_test, pfa, 0.025);
  const int hi = binomial_quantile(m_test, pfa, 0.975);
  const bool ok = exceed >= lo && exceed <= hi;
  return {ok, false,
          fmt("empirical rate %.4f (%.0f of 20000) inside binomial band "
              "[%.0f, %.0f] for pfa 0.02",
              exceed / static_cast<double>(m_test), exceed, lo, hi)};
}

// --------------------------------------------------------------------------
// 9. Every estimator output satisfied the fill-factor constraints.
// --------------------------------------------------------------------------
Outcome criterion_constraints() {
  // Estimates are constraint-checked on every iteration as they are built;
  // this re-checks every final output collected across the criteria above.
  std::size_t violations = 0;
  for (const auto& alpha : g_collected_alphas) {
    if (alpha.minCoeff() < 0.0) ++violations;
    if (alpha.sum() > 1.0 - kAbundanceSumMargin + 1e-12) ++violations;
  }
  return {violations == 0, false,
          fmt("%.0f violations across %.0f collected estimates",
              static_cast<double>(violations),
              static_cast<double>(g_collected_alphas.size()))};
}

// --------------------------------------------------------------------------
// 10. Real-dataset reproduction (gated on SUBPIX_RIT_DIR).
// --------------------------------------------------------------------------
Outcome criterion_real_dataset() {
  const char* dir = std::getenv("SUBPIX_RIT_DIR");
  if (!dir)
    return {true, true,
            "set SUBPIX_RIT_DIR (cube + library, see README) to enable"};
  const std::string base = dir;
  HyperCube cube = read_cube(base + "/rit_cube.hdr", base + "/rit_cube.raw");
  cube = apply_band_mask(cube, BandMask::standard());
  EndmemberLibrary full = read_spectral_library(base + "/rit_library.txt");
  full = apply_band_mask(full, BandMask::standard());
  // single-signature library for the target-3 study
  const EndmemberLibrary t3(full.signatures().col(2), {full.names()[2]});

  int p3_row = 185, p3_col = 281;  // 0-based (x, y) = (282, 186)
  if (const char* p3 = std::getenv("SUBPIX_RIT_P3"))
    std::sscanf(p3, "%d,%d", &p3_row, &p3_col);

  DetectorConfig det;
  det.bg_window = 55;
  det.guard_window = 3;
  det.threads = kThreads;

  std::string detail;
  double alpha_hat[2], far[2];
  const EstimatorKind kinds[2] = {EstimatorKind::heuristic,
                                  EstimatorKind::constrained};
  for (int k = 0; k < 2; ++k) {
    det.estimator = kinds[k];
    const DetectionGrid grid = sliding_detect(cube, t3, det);
    const DetectionResult& at_p3 = grid.at(p3_row, p3_col);
    if (!at_p3.valid) return {false, false, "target pixel window does not fit"};
    alpha_hat[k] = at_p3.alpha_hat[0];
    far[k] = false_alarm_rate(grid, std::make_pair(p3_row, p3_col));
    detail += std::string(to_string(kinds[k])) +
              fmt(": alpha %.3f far %.3f%%; ", alpha_hat[k], far[k] * 100);
  }
  const bool ok = std::abs(alpha_hat[0] - 0.140) <= 0.02 &&
                  std::abs(alpha_hat[1] - 0.136) <= 0.02 &&
                  std::abs(far[0] * 100 - 4.453) <= 1.0 &&
                  std::abs(far[1] * 100 - 4.483) <= 1.0;
  return {ok, false, detail};
}

}  // namespace

int main() {
  std::printf("acceptance suite (%d worker threads)\n", kThreads);
  run(1, "determinant factorization identity", criterion_identity);
  run(2, "compressed-likelihood dominance", criterion_mle_dominance);
  run(3, "grid-oracle equivalence", criterion_oracle_equivalence);
  run(4, "convergence traces", criterion_convergence);
  run(5, "estimation quality over the abundance ladder",
      criterion_estimation_quality);
  run(6, "detection probability at pfa 1e-3", criterion_detection);
  run(7, "filled-pixel study", criterion_filled_pixel);
  run(8, "calibration consistency", criterion_calibration);
  run(9, "fill-factor constraint sweep", criterion_constraints);
  run(10, "real-dataset reproduction", criterion_real_dataset);
  if (g_failures) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
