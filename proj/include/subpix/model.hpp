#ifndef SUBPIX_MODEL_HPP
#define SUBPIX_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "subpix/random.hpp"
#include "subpix/types.hpp"

namespace subpix {

// Configuration of a synthetic scene: one pixel under test plus K secondary
// (background-only) pixels drawn from the same Gaussian background.
struct SceneConfig {
  int n_bands = 116;
  int k_secondary = 625;
  double noise_variance = 0.5;
  Eigen::VectorXd background_mean;  // empty means zero mean
  std::uint64_t seed = 0;
  // Optional full covariance; when set it overrides noise_variance * I.
  std::optional<Eigen::MatrixXd> background_covariance;

  void validate() const {
    if (n_bands < 1) throw config_error("scene: n_bands must be positive");
    if (k_secondary <= n_bands)
      throw config_error("scene: k_secondary must exceed n_bands");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
      throw config_error("scene: noise_variance must be finite and >= 0");
    if (background_mean.size() != 0 && background_mean.size() != n_bands)
      throw config_error("scene: background_mean length mismatch");
    if (background_covariance &&
        (background_covariance->rows() != n_bands ||
         background_covariance->cols() != n_bands))
      throw config_error("scene: background_covariance shape mismatch");
  }

  Eigen::VectorXd mean() const {
    return background_mean.size() ? background_mean
                                  : Eigen::VectorXd::Zero(n_bands);
  }
};

struct Scene {
  Eigen::VectorXd put;        // pixel under test
  Eigen::MatrixXd secondary;  // n_bands x k_secondary
};

// Replacement-model mixing: targets fill part of the pixel and displace the
// same fraction of background.
inline Eigen::VectorXd synthesize_pixel(const EndmemberLibrary& lib,
                                        const AbundanceVector& alpha,
                                        const Eigen::VectorXd& background) {
  if (alpha.size() != lib.count())
    throw data_error("synthesize_pixel: abundance/library size mismatch");
  if (background.size() != lib.bands())
    throw data_error("synthesize_pixel: background/library band mismatch");
  require_finite(background, "synthesize_pixel background");
  return lib.signatures() * alpha.values() + alpha.background() * background;
}

namespace detail {

// Draws one background vector. Draw order is part of the determinism
// contract; do not reorder.
inline Eigen::VectorXd draw_background(const SceneConfig& cfg,
                                       const Eigen::VectorXd& mu,
                                       const Eigen::MatrixXd* chol,
                                       GaussianStream& rng) {
  Eigen::VectorXd n(cfg.n_bands);
  for (int i = 0; i < cfg.n_bands; ++i) n[i] = rng.normal();
  if (chol) return mu + (*chol) * n;
  return mu + std::sqrt(cfg.noise_variance) * n;
}

}  // namespace detail

// Generates (pixel under test, secondary matrix). Pure function of
// (cfg, lib, alpha): identical seeds give bit-identical scenes.
inline Scene generate_scene(const SceneConfig& cfg, const EndmemberLibrary& lib,
                            const AbundanceVector& alpha) {
  cfg.validate();
  if (lib.bands() != cfg.n_bands)
    throw data_error("generate_scene: library band count mismatch");
  if (alpha.size() != lib.count())
    throw data_error("generate_scene: abundance/library size mismatch");

  const Eigen::VectorXd mu = cfg.mean();
  Eigen::MatrixXd chol;
  const Eigen::MatrixXd* chol_ptr = nullptr;
  if (cfg.background_covariance) {
    Eigen::LLT<Eigen::MatrixXd> llt(*cfg.background_covariance);
    if (llt.info() != Eigen::Success)
      throw config_error("generate_scene: background covariance not PD");
    chol = llt.matrixL();
    chol_ptr = &chol;
  }

  GaussianStream rng(cfg.seed);
  Scene scene;
  scene.put = synthesize_pixel(lib, alpha,
                               detail::draw_background(cfg, mu, chol_ptr, rng));
  scene.secondary.resize(cfg.n_bands, cfg.k_secondary);
  for (int k = 0; k < cfg.k_secondary; ++k)
    scene.secondary.col(k) = detail::draw_background(cfg, mu, chol_ptr, rng);
  return scene;
}

// Deterministic smooth reflectance-like spectra for simulation runs that do
// not load a measured library; values are in percent-reflectance units
// (reflectance scaled by 100), roughly [2, 70]. Each endmember gets one
// dominant spectral feature in its own part of the band range plus weak
// secondary texture, so distinct endmembers stay distinguishable.
inline EndmemberLibrary synthetic_library(int n_bands, int count,
                                          std::uint64_t seed) {
  if (n_bands < 1 || count < 1)
    throw config_error("synthetic_library: bad dimensions");
  GaussianStream rng(derive_seed(seed, 0x5157));
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };

  Eigen::MatrixXd sig(n_bands, count);
  for (int e = 0; e < count; ++e) {
    const double base = unif(3.0, 8.0);
    const double main_center = (e + 0.15 + 0.7 * rng.uniform()) / count;
    const double main_width = unif(0.08, 0.14);
    const double main_amp = unif(35.0, 55.0);
    double center[2], width[2], amp[2];
    for (int m = 0; m < 2; ++m) {
      center[m] = unif(0.0, 1.0);
      width[m] = unif(0.04, 0.10);
      amp[m] = unif(3.0, 10.0);
    }
    for (int i = 0; i < n_bands; ++i) {
      const double x = n_bands > 1 ? static_cast<double>(i) / (n_bands - 1) : 0.5;
      const double dm = (x - main_center) / main_width;
      double v = base + main_amp * std::exp(-0.5 * dm * dm);
      for (int m = 0; m < 2; ++m) {
        const double d = (x - center[m]) / width[m];
        v += amp[m] * std::exp(-0.5 * d * d);
      }
      sig(i, e) = std::clamp(v, 2.0, 95.0);
    }
  }
  std::vector<std::string> names;
  names.reserve(count);
  for (int e = 0; e < count; ++e) names.push_back("em" + std::to_string(e + 1));
  return EndmemberLibrary(std::move(sig), std::move(names));
}

// Canonical three-endmember fill-factor ladder used by the simulation
// benchmarks (abundance sums 0.00, 0.32, ..., 0.90).
inline std::vector<Eigen::VectorXd> default_abundance_rows() {
  const double rows[][3] = {
      {0.00, 0.00, 0.0}, {0.31, 0.01, 0.0}, {0.32, 0.02, 0.0},
      {0.33, 0.03, 0.0}, {0.34, 0.04, 0.0}, {0.35, 0.05, 0.0},
      {0.40, 0.10, 0.0}, {0.45, 0.15, 0.0}, {0.50, 0.20, 0.0},
      {0.55, 0.25, 0.0}, {0.60, 0.30, 0.0}};
  std::vector<Eigen::VectorXd> out;
  for (const auto& r : rows) {
    Eigen::VectorXd v(3);
    v << r[0], r[1], r[2];
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace subpix

#endif  // SUBPIX_MODEL_HPP
