#ifndef SUBPIX_STATS_HPP
#define SUBPIX_STATS_HPP

#include <cmath>
#include <utility>

#include "subpix/types.hpp"

namespace subpix {

enum class WhitenerKind { cholesky, symmetric };

// Secondary-data statistics shared by every likelihood evaluation around one
// pixel. Immutable after build; safe to share across threads.
struct BackgroundContext {
  Eigen::VectorXd sum;               // sum of secondary pixels
  Eigen::VectorXd mean;              // sum / K
  Eigen::MatrixXd scatter;           // Z Z^T - sum sum^T / (K+1)
  Eigen::MatrixXd centered_scatter;  // scatter - sum sum^T / (K (K+1));
                                     // equals sum_k (z_k - mean)(z_k - mean)^T
  Eigen::MatrixXd whitener;          // W with W^T W = centered_scatter^{-1}
  double log_det_centered = 0.0;     // log det(centered_scatter)
  int n_bands = 0;
  int k_secondary = 0;
  // Constants of the compressed log-likelihoods:
  double c1 = 0.0;  // (K+1) N/2 * log(2 pi)
  double c2 = 0.0;  // (K+1)/2
  double c3 = 0.0;  // c1 + (K+1) N/2 - c2 N log(K+1)
  double c4 = 0.0;  // K/(K+1)
};

// The abundance search runs entirely in whitened coordinates.
struct WhitenedProblem {
  Eigen::VectorXd pixel;        // sqrt(c4) W y
  Eigen::MatrixXd signatures;   // sqrt(c4) W T
  Eigen::VectorXd secondary_mean;  // sqrt(c4) W mean
};

namespace detail {

// Positive-definite check tolerance: pivots must exceed
// 1e-12 * trace / n. Returns log det on success.
inline double pd_log_det(const Eigen::MatrixXd& m, Eigen::MatrixXd* inv_factor,
                         const char* what) {
  const int n = static_cast<int>(m.rows());
  const double tol = 1e-12 * m.trace() / n;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw singular_statistics_error(std::string(what) + ": not positive-definite");
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) {
    const double pivot = l(i, i) * l(i, i);
    if (!(pivot > tol))
      throw singular_statistics_error(std::string(what) +
                                      ": pivot below tolerance");
    log_det += std::log(pivot);
  }
  if (inv_factor)
    *inv_factor = l.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(n, n));
  return log_det;
}

}  // namespace detail

// Builds the background statistics from K secondary pixels (columns).
// Fails with singular_statistics_error when K <= N or the centered scatter
// is numerically singular.
inline BackgroundContext build_context(const Eigen::MatrixXd& secondary,
                                       WhitenerKind kind = WhitenerKind::cholesky) {
  const int n = static_cast<int>(secondary.rows());
  const int k = static_cast<int>(secondary.cols());
  if (k <= n)
    throw singular_statistics_error(
        "build_context: need more secondary pixels than bands (K > N)");
  require_finite(secondary, "build_context");

  BackgroundContext ctx;
  ctx.n_bands = n;
  ctx.k_secondary = k;
  ctx.sum = secondary.rowwise().sum();
  ctx.mean = ctx.sum / k;

  Eigen::MatrixXd zzt = Eigen::MatrixXd::Zero(n, n);
  zzt.selfadjointView<Eigen::Lower>().rankUpdate(secondary);
  zzt = zzt.selfadjointView<Eigen::Lower>();
  ctx.scatter = zzt - ctx.sum * ctx.sum.transpose() / (k + 1.0);
  ctx.centered_scatter =
      ctx.scatter - ctx.sum * ctx.sum.transpose() / (k * (k + 1.0));

  if (kind == WhitenerKind::cholesky) {
    ctx.log_det_centered =
        detail::pd_log_det(ctx.centered_scatter, &ctx.whitener, "build_context");
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ctx.centered_scatter);
    if (es.info() != Eigen::Success)
      throw singular_statistics_error("build_context: eigendecomposition failed");
    const double tol = 1e-12 * ctx.centered_scatter.trace() / n;
    ctx.log_det_centered = 0.0;
    Eigen::VectorXd inv_sqrt(n);
    for (int i = 0; i < n; ++i) {
      const double ev = es.eigenvalues()[i];
      if (!(ev > tol))
        throw singular_statistics_error("build_context: eigenvalue below tolerance");
      ctx.log_det_centered += std::log(ev);
      inv_sqrt[i] = 1.0 / std::sqrt(ev);
    }
    ctx.whitener = es.eigenvectors() * inv_sqrt.asDiagonal() *
                   es.eigenvectors().transpose();
  }

  ctx.c1 = 0.5 * (k + 1.0) * n * std::log(2.0 * M_PI);
  ctx.c2 = 0.5 * (k + 1.0);
  ctx.c4 = k / (k + 1.0);
  ctx.c3 = ctx.c1 + 0.5 * (k + 1.0) * n - ctx.c2 * n * std::log(k + 1.0);
  return ctx;
}

inline WhitenedProblem whiten(const BackgroundContext& ctx,
                              const Eigen::VectorXd& pixel,
                              const EndmemberLibrary& lib) {
  if (pixel.size() != ctx.n_bands || lib.bands() != ctx.n_bands)
    throw data_error("whiten: band count mismatch");
  const double f = std::sqrt(ctx.c4);
  WhitenedProblem wp;
  wp.pixel = f * (ctx.whitener * pixel);
  wp.signatures = f * (ctx.whitener * lib.signatures());
  wp.secondary_mean = f * (ctx.whitener * ctx.mean);
  return wp;
}

// Compressed log-likelihood under the background-only hypothesis, computed
// directly from the joint sample scatter.
inline double log_likelihood_h0(const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& secondary) {
  const int n = static_cast<int>(secondary.rows());
  const int k = static_cast<int>(secondary.cols());
  if (y.size() != n) throw data_error("log_likelihood_h0: band count mismatch");
  if (k <= n)
    throw singular_statistics_error("log_likelihood_h0: K must exceed N");

  const Eigen::VectorXd mu0 = (y + secondary.rowwise().sum()) / (k + 1.0);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(n, n);
  scatter.selfadjointView<Eigen::Lower>().rankUpdate(secondary.colwise() - mu0);
  scatter = scatter.selfadjointView<Eigen::Lower>();
  scatter += (y - mu0) * (y - mu0).transpose();
  const Eigen::MatrixXd m0 = scatter / (k + 1.0);

  const double log_det = detail::pd_log_det(m0, nullptr, "log_likelihood_h0");
  const double c1 = 0.5 * (k + 1.0) * n * std::log(2.0 * M_PI);
  const double c2 = 0.5 * (k + 1.0);
  return -c1 - c2 * log_det - n * c2;
}

// Same value computed through the background context (the two routes agree
// algebraically; both are kept so they can check each other).
inline double log_likelihood_h0(const BackgroundContext& ctx,
                                const Eigen::VectorXd& y) {
  if (y.size() != ctx.n_bands)
    throw data_error("log_likelihood_h0: band count mismatch");
  const double q = (ctx.whitener * (y - ctx.mean)).squaredNorm();
  return -ctx.c3 - ctx.c2 * ctx.log_det_centered -
         ctx.c2 * std::log1p(ctx.c4 * q);
}

// Partially-compressed log-likelihood under the target-present hypothesis,
// with the mean and covariance replaced by their maximizers at fixed alpha.
inline double log_likelihood_h1(const BackgroundContext& ctx,
                                const Eigen::VectorXd& y,
                                const EndmemberLibrary& lib,
                                const AbundanceVector& alpha) {
  if (y.size() != ctx.n_bands || lib.bands() != ctx.n_bands)
    throw data_error("log_likelihood_h1: band count mismatch");
  if (alpha.size() != lib.count())
    throw data_error("log_likelihood_h1: abundance/library size mismatch");
  const double bg = alpha.background();
  const Eigen::VectorXd x = y - lib.signatures() * alpha.values();
  const double q = (ctx.whitener * (x / bg - ctx.mean)).squaredNorm();
  return -ctx.c3 - ctx.n_bands * std::log(bg) -
         ctx.c2 * ctx.log_det_centered - ctx.c2 * std::log1p(ctx.c4 * q);
}

// Objective minimized over the abundances; log_likelihood_h1 equals
// -c3 - c2 * log det(centered_scatter) - abundance_objective.
inline double abundance_objective(const WhitenedProblem& wp,
                                  const BackgroundContext& ctx,
                                  const Eigen::VectorXd& alpha) {
  const double bg = 1.0 - alpha.sum();
  if (!(bg > 0.0))
    throw config_error("abundance_objective: abundance sum not below one");
  const Eigen::VectorXd v =
      (wp.pixel - wp.signatures * alpha) / bg - wp.secondary_mean;
  return ctx.n_bands * std::log(bg) + ctx.c2 * std::log1p(v.squaredNorm());
}

inline double abundance_objective(const WhitenedProblem& wp,
                                  const BackgroundContext& ctx,
                                  const AbundanceVector& alpha) {
  return abundance_objective(wp, ctx, alpha.values());
}

// The determinant of the compressed H1 scatter computed two ways: directly,
// and factored through the centered scatter plus a rank-one term. Returned
// as (direct, factored) so tests can compare the routes.
inline std::pair<double, double> scatter_determinant_identity(
    const BackgroundContext& ctx, const Eigen::VectorXd& y,
    const EndmemberLibrary& lib, const AbundanceVector& alpha) {
  const int k = ctx.k_secondary;
  const double bg = alpha.background();
  const Eigen::VectorXd x = y - lib.signatures() * alpha.values();
  const Eigen::VectorXd xs = x / bg;
  const Eigen::VectorXd mu1 = (xs + ctx.sum) / (k + 1.0);

  const Eigen::MatrixXd zzt =
      ctx.scatter + ctx.sum * ctx.sum.transpose() / (k + 1.0);
  const Eigen::MatrixXd direct_m =
      (xs - mu1) * (xs - mu1).transpose() + zzt -
      ctx.sum * mu1.transpose() - mu1 * ctx.sum.transpose() +
      static_cast<double>(k) * mu1 * mu1.transpose();
  const double direct = direct_m.determinant();

  const Eigen::VectorXd u = xs - ctx.mean;
  const double quad = u.dot(ctx.centered_scatter.llt().solve(u));
  const double factored =
      ctx.centered_scatter.determinant() * (1.0 + ctx.c4 * quad);
  return {direct, factored};
}

}  // namespace subpix

#endif  // SUBPIX_STATS_HPP
