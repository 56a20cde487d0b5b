#ifndef SUBPIX_ESTIMATORS_HPP
#define SUBPIX_ESTIMATORS_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "subpix/stats.hpp"
#include "subpix/types.hpp"

namespace subpix {

// Grid of candidate background abundances used by the heuristic
// normalization step.
struct BackgroundGrid {
  double start = 0.1;
  double stop = 0.9;
  double step = 0.01;
};

struct EstimatorConfig {
  int n_iter = 15;
  // Empty selects the uniform interior start 1/(2r) per component.
  std::optional<Eigen::VectorXd> alpha_init;
  BackgroundGrid bg_grid;
  int root_grid_points = 2048;  // bracketing grid of the constrained solver
  double root_tol = 1e-12;      // bisection width tolerance

  void validate() const {
    if (n_iter < 1) throw config_error("estimator: n_iter must be >= 1");
    if (!(bg_grid.start >= 0.0 && bg_grid.start < bg_grid.stop &&
          bg_grid.stop < 1.0))
      throw config_error("estimator: background grid must satisfy 0 <= start < stop < 1");
    if (!(bg_grid.step > 0.0))
      throw config_error("estimator: background grid step must be positive");
    if (root_grid_points < 2)
      throw config_error("estimator: root_grid_points must be >= 2");
    if (!(root_tol > 0.0))
      throw config_error("estimator: root_tol must be positive");
  }
};

struct EstimateTrace {
  AbundanceVector alpha_hat = AbundanceVector::zeros(1);
  std::vector<double> l1_per_iteration;  // one entry per outer iteration
  std::vector<double> delta_l1;          // [0] is NaN; [h] = |(L1[h]-L1[h-1])/L1[h]|
  int iterations_run = 0;
  bool converged = false;  // some delta_l1 fell below 1e-2
};

// Per-coordinate reduction of the whitened problem: the slack left to
// coordinate j by the other abundances, and the pixel residual after
// removing their contributions.
struct CoordinateContext {
  double slack = 0.0;            // 1 - sum_{i != j} alpha_i
  Eigen::VectorXd residual;      // pixel - sum_{i != j} signatures_i alpha_i
  bool degenerate() const { return !(slack > kAbundanceSumMargin); }
};

inline CoordinateContext coordinate_context(const WhitenedProblem& wp,
                                            const Eigen::VectorXd& alpha,
                                            int j) {
  const int r = static_cast<int>(wp.signatures.cols());
  if (j < 0 || j >= r) throw config_error("coordinate_context: index out of range");
  if (alpha.size() != r)
    throw data_error("coordinate_context: abundance size mismatch");
  CoordinateContext cc;
  cc.slack = 1.0 - (alpha.sum() - alpha[j]);
  cc.residual = wp.pixel - wp.signatures * alpha + wp.signatures.col(j) * alpha[j];
  return cc;
}

namespace detail {

// Inner products that make every per-coordinate evaluation O(1).
struct CoordinateScalars {
  double yy, yz, yt, tt, tz, zz;
  CoordinateScalars(const WhitenedProblem& wp, const CoordinateContext& cc, int j) {
    const auto& sig = wp.signatures.col(j);
    const auto& z = wp.secondary_mean;
    yy = cc.residual.squaredNorm();
    yz = cc.residual.dot(z);
    yt = cc.residual.dot(sig);
    tt = sig.squaredNorm();
    tz = sig.dot(z);
    zz = z.squaredNorm();
  }
};

// Restriction of the abundance objective to coordinate j, in the stable
// form (N - 2 c2) log(slack - a) + c2 log Q(a) with Q the quadratic
// expansion of slack^2-scaled (1 + residual norm^2).
struct CoordinateObjective {
  double n, c2, slack;
  double q0, q1, q2;  // Q(a) = q0 + q1 a + q2 a^2

  CoordinateObjective(const BackgroundContext& ctx, const CoordinateScalars& s,
                      double slack_in)
      : n(ctx.n_bands), c2(ctx.c2), slack(slack_in) {
    q0 = s.yy - 2.0 * slack * s.yz + slack * slack * s.zz + slack * slack;
    q1 = 2.0 * (slack * (s.tz - s.zz) + s.yz - s.yt) - 2.0 * slack;
    q2 = 1.0 + s.tt - 2.0 * s.tz + s.zz;
  }

  double quad(double a) const { return q0 + a * (q1 + a * q2); }

  double operator()(double a) const {
    return (n - 2.0 * c2) * std::log(slack - a) + c2 * std::log(quad(a));
  }
};

inline bool better_candidate(double g, double a, double best_g, double best_a) {
  if (g < best_g) return true;
  return g == best_g && a < best_a;  // ties prefer the sparser explanation
}

}  // namespace detail

// One heuristic coordinate update: the admissible real root of the
// stationarity quadratic that minimizes the per-coordinate objective.
// Returns 0 when no admissible root exists.
inline double heuristic_step(const WhitenedProblem& wp,
                             const BackgroundContext& ctx, double slack,
                             const Eigen::VectorXd& residual, int j) {
  CoordinateContext cc{slack, residual};
  const detail::CoordinateScalars s(wp, cc, j);
  const detail::CoordinateObjective g(ctx, s, slack);
  const double n = ctx.n_bands, c2 = ctx.c2;

  // -N q2 a^2 + [2 c2 q2 slack + (c2 - N) q1] a + [c2 q1 slack + (2 c2 - N) q0] = 0
  const double qa = -n * g.q2;
  const double qb = 2.0 * c2 * g.q2 * slack + (c2 - n) * g.q1;
  const double qc = c2 * g.q1 * slack + (2.0 * c2 - n) * g.q0;

  double roots[2];
  int n_roots = 0;
  const double scale = std::abs(qa) + std::abs(qb) + std::abs(qc);
  if (std::abs(qa) <= 1e-14 * scale) {
    if (std::abs(qb) > 1e-14 * scale) roots[n_roots++] = -qc / qb;
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
      roots[n_roots++] = q / qa;
      if (q != 0.0) roots[n_roots++] = qc / q;
    }
  }

  const double hi = slack - kAbundanceSumMargin;
  double best_a = 0.0;
  double best_g = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int i = 0; i < n_roots; ++i) {
    const double a = roots[i];
    if (!(a >= 0.0 && a <= hi)) continue;
    const double ga = g(a);
    if (!found || detail::better_candidate(ga, a, best_g, best_a)) {
      best_a = a;
      best_g = ga;
      found = true;
    }
  }
  return found ? best_a : 0.0;
}

// One constrained coordinate update: stationary points of the equality-
// constrained per-coordinate problem located by bracketed bisection of the
// multiplier-eliminated equation, then compared (together with 0) on the
// per-coordinate objective.
inline double constrained_step(const WhitenedProblem& wp,
                               const BackgroundContext& ctx, double slack,
                               const Eigen::VectorXd& residual, int j,
                               const EstimatorConfig& cfg) {
  CoordinateContext cc{slack, residual};
  const detail::CoordinateScalars s(wp, cc, j);
  const detail::CoordinateObjective g(ctx, s, slack);
  const double n = ctx.n_bands, c2 = ctx.c2;

  // Difference of the two multiplier expressions; also the derivative of the
  // objective along the constraint a + b = slack.
  auto stat = [&](double a) {
    const double b = slack - a;
    const double q = g.quad(a);
    const double qa = 2.0 * (s.tt * a + s.tz * b - s.yt);
    const double qb = 2.0 * b * (1.0 + s.zz) + 2.0 * (s.tz * a - s.yz);
    return c2 * (qa - qb) / q - (n - 2.0 * c2) / b;
  };

  const double hi = slack - kAbundanceSumMargin;
  double best_a = 0.0;
  double best_g = g(0.0);

  const int points = cfg.root_grid_points;
  double prev_a = slack / (points + 1.0);
  double prev_f = stat(prev_a);
  for (int i = 2; i <= points; ++i) {
    const double a = slack * i / (points + 1.0);
    const double f = stat(a);
    double root = std::numeric_limits<double>::quiet_NaN();
    if (prev_f == 0.0) {
      root = prev_a;
    } else if ((prev_f < 0.0) != (f < 0.0)) {
      double lo = prev_a, up = a, flo = prev_f;
      while (up - lo > cfg.root_tol) {
        const double mid = 0.5 * (lo + up);
        const double fm = stat(mid);
        if (fm == 0.0) {
          lo = up = mid;
          break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          up = mid;
        }
      }
      root = 0.5 * (lo + up);
    }
    if (std::isfinite(root)) {
      const double a_cand = std::min(root, hi);
      if (a_cand >= 0.0) {
        const double ga = g(a_cand);
        if (detail::better_candidate(ga, a_cand, best_g, best_a)) {
          best_g = ga;
          best_a = a_cand;
        }
      }
    }
    prev_a = a;
    prev_f = f;
  }
  return best_a;
}

namespace detail {

inline Eigen::VectorXd initial_alpha(const EstimatorConfig& cfg, int r) {
  if (cfg.alpha_init) {
    const Eigen::VectorXd& a = *cfg.alpha_init;
    if (a.size() != r) throw config_error("estimator: alpha_init size mismatch");
    AbundanceVector check(a);  // enforces the constraints
    return a;
  }
  return Eigen::VectorXd::Constant(r, 0.5 / r);
}

inline void finish_trace(EstimateTrace& trace) {
  const auto& l1 = trace.l1_per_iteration;
  trace.delta_l1.assign(l1.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t h = 1; h < l1.size(); ++h) {
    trace.delta_l1[h] = std::abs((l1[h] - l1[h - 1]) / l1[h]);
    if (trace.delta_l1[h] < 1e-2) trace.converged = true;
  }
  trace.iterations_run = static_cast<int>(l1.size());
}

}  // namespace detail

// Cyclic heuristic estimation: per-coordinate quadratic updates followed by
// a normalization that rescales the sweep output to 1 - alpha_b, with
// alpha_b grid-searched on the objective each iteration.
inline EstimateTrace estimate_heuristic(const WhitenedProblem& wp,
                                        const BackgroundContext& ctx,
                                        const EstimatorConfig& cfg) {
  cfg.validate();
  const int r = static_cast<int>(wp.signatures.cols());
  Eigen::VectorXd alpha = detail::initial_alpha(cfg, r);

  EstimateTrace trace{AbundanceVector::zeros(r), {}, {}, 0, false};
  const double l1_base = -ctx.c3 - ctx.c2 * ctx.log_det_centered;

  for (int t = 0; t < cfg.n_iter; ++t) {
    // Sweep: freshly updated coordinates feed the later ones.
    Eigen::VectorXd work = alpha;
    for (int j = 0; j < r; ++j) {
      const CoordinateContext cc = coordinate_context(wp, work, j);
      work[j] = cc.degenerate()
                    ? 0.0
                    : heuristic_step(wp, ctx, cc.slack, cc.residual, j);
    }

    const double total = work.sum();
    if (total <= 0.0) {
      alpha.setZero();  // nothing detected this sweep; normalization skipped
    } else {
      double best_g = std::numeric_limits<double>::infinity();
      for (double bg = cfg.bg_grid.start;
           bg <= cfg.bg_grid.stop + 0.5 * cfg.bg_grid.step;
           bg += cfg.bg_grid.step) {
        const Eigen::VectorXd cand = work * ((1.0 - bg) / total);
        const double gc = abundance_objective(wp, ctx, cand);
        if (gc < best_g) {
          best_g = gc;
          alpha = cand;
        }
      }
    }

    AbundanceVector checked(alpha);  // constraint holds on every iterate
    trace.l1_per_iteration.push_back(l1_base -
                                     abundance_objective(wp, ctx, alpha));
    trace.alpha_hat = std::move(checked);
  }
  detail::finish_trace(trace);
  return trace;
}

// Cyclic constrained estimation: exact per-coordinate minimization with the
// background slack handled through the equality constraint; no
// normalization step.
inline EstimateTrace estimate_constrained(const WhitenedProblem& wp,
                                          const BackgroundContext& ctx,
                                          const EstimatorConfig& cfg) {
  cfg.validate();
  const int r = static_cast<int>(wp.signatures.cols());
  Eigen::VectorXd alpha = detail::initial_alpha(cfg, r);

  EstimateTrace trace{AbundanceVector::zeros(r), {}, {}, 0, false};
  const double l1_base = -ctx.c3 - ctx.c2 * ctx.log_det_centered;

  for (int t = 0; t < cfg.n_iter; ++t) {
    for (int j = 0; j < r; ++j) {
      const CoordinateContext cc = coordinate_context(wp, alpha, j);
      alpha[j] = cc.degenerate()
                     ? 0.0
                     : constrained_step(wp, ctx, cc.slack, cc.residual, j, cfg);
    }
    AbundanceVector checked(alpha);
    trace.l1_per_iteration.push_back(l1_base -
                                     abundance_objective(wp, ctx, alpha));
    trace.alpha_hat = std::move(checked);
  }
  detail::finish_trace(trace);
  return trace;
}

// Exhaustive grid minimizer over the constrained simplex. Verification tool;
// cost grows as grid^r, so it refuses r > 3.
inline AbundanceVector estimate_oracle(const WhitenedProblem& wp,
                                       const BackgroundContext& ctx,
                                       double grid_step) {
  const int r = static_cast<int>(wp.signatures.cols());
  if (r > 3) throw config_error("estimate_oracle: refuses r > 3");
  if (!(grid_step > 0.0 && grid_step < 1.0))
    throw config_error("estimate_oracle: bad grid step");

  const double limit = 1.0 - kAbundanceSumMargin;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd best = alpha;
  double best_g = abundance_objective(wp, ctx, alpha);

  const int max_idx = static_cast<int>(limit / grid_step);
  std::vector<int> idx(r, 0);
  while (true) {
    // advance the mixed-radix counter over feasible grid nodes
    int pos = r - 1;
    while (pos >= 0) {
      ++idx[pos];
      double sum = 0.0;
      for (int i = 0; i < r; ++i) sum += idx[i] * grid_step;
      if (idx[pos] <= max_idx && sum <= limit) break;
      idx[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
    for (int i = 0; i < r; ++i) alpha[i] = idx[i] * grid_step;
    const double g = abundance_objective(wp, ctx, alpha);
    if (g < best_g) {
      best_g = g;
      best = alpha;
    }
  }
  return AbundanceVector(best);
}

}  // namespace subpix

#endif  // SUBPIX_ESTIMATORS_HPP
