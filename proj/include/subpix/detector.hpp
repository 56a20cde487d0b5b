#ifndef SUBPIX_DETECTOR_HPP
#define SUBPIX_DETECTOR_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "subpix/estimators.hpp"
#include "subpix/io.hpp"
#include "subpix/parallel.hpp"
#include "subpix/stats.hpp"

namespace subpix {

enum class EstimatorKind { heuristic, constrained };

inline const char* to_string(EstimatorKind kind) {
  return kind == EstimatorKind::heuristic ? "heuristic" : "constrained";
}

struct DetectorConfig {
  EstimatorKind estimator = EstimatorKind::constrained;
  EstimatorConfig estimator_cfg;
  int bg_window = 55;     // odd side length of the background window
  int guard_window = 3;   // odd side length of the guard window
  std::optional<double> threshold;        // empty = uncalibrated
  std::optional<int> secondary_subsample; // keep only this many annulus pixels
  int threads = 1;

  int annulus_size() const {
    return bg_window * bg_window - guard_window * guard_window;
  }

  void validate() const {
    estimator_cfg.validate();
    if (bg_window < 3 || bg_window % 2 == 0)
      throw config_error("detector: bg_window must be odd and >= 3");
    if (guard_window < 1 || guard_window % 2 == 0)
      throw config_error("detector: guard_window must be odd and >= 1");
    if (guard_window >= bg_window)
      throw config_error("detector: guard_window must be smaller than bg_window");
    if (secondary_subsample && *secondary_subsample < 1)
      throw config_error("detector: secondary_subsample must be positive");
  }
};

struct DetectionResult {
  double statistic = 0.0;
  AbundanceVector alpha_hat = AbundanceVector::zeros(1);
  std::optional<bool> decision;  // empty when no threshold is configured
  EstimateTrace trace;
  std::optional<std::pair<int, int>> pixel;  // empty for synthetic inputs
  bool valid = true;
};

inline EstimateTrace run_estimator(EstimatorKind kind, const WhitenedProblem& wp,
                                   const BackgroundContext& ctx,
                                   const EstimatorConfig& cfg) {
  return kind == EstimatorKind::heuristic ? estimate_heuristic(wp, ctx, cfg)
                                          : estimate_constrained(wp, ctx, cfg);
}

// GLRT statistic for one pixel: difference of the compressed log-likelihoods
// at the estimated abundances, evaluated as objective(0) - objective(alpha)
// which is the same quantity without the large shared constants.
inline DetectionResult glrt_statistic(const BackgroundContext& ctx,
                                      const Eigen::VectorXd& y,
                                      const EndmemberLibrary& lib,
                                      const DetectorConfig& cfg) {
  cfg.validate();
  const WhitenedProblem wp = whiten(ctx, y, lib);
  EstimateTrace trace = run_estimator(cfg.estimator, wp, ctx, cfg.estimator_cfg);

  const double g_null =
      abundance_objective(wp, ctx, Eigen::VectorXd::Zero(lib.count()));
  const double g_hat = abundance_objective(wp, ctx, trace.alpha_hat.values());

  DetectionResult res;
  res.statistic = g_null - g_hat;
  res.alpha_hat = trace.alpha_hat;
  if (cfg.threshold) res.decision = res.statistic > *cfg.threshold;
  res.trace = std::move(trace);
  return res;
}

// Empirical threshold for a target false-alarm probability: the
// ceil((M+1)(1-pfa))-th order statistic of the null-hypothesis sample
// (clamped to the sample range). Sets *undersampled when fewer than 1/pfa
// samples are available.
inline double calibrate_threshold(const std::vector<double>& h0_statistics,
                                  double pfa, bool* undersampled = nullptr) {
  if (h0_statistics.empty())
    throw config_error("calibrate_threshold: empty statistics");
  if (!(pfa > 0.0 && pfa < 1.0))
    throw config_error("calibrate_threshold: pfa must lie in (0, 1)");
  const std::size_t m = h0_statistics.size();
  if (undersampled) *undersampled = static_cast<double>(m) < 1.0 / pfa;

  std::vector<double> sorted = h0_statistics;
  std::sort(sorted.begin(), sorted.end());
  const double pos = (m + 1.0) * (1.0 - pfa);
  const auto idx = static_cast<std::size_t>(
      std::clamp(std::ceil(pos - 1e-9), 1.0, static_cast<double>(m)));
  return sorted[idx - 1];
}

struct DetectionGrid {
  int rows = 0;
  int cols = 0;
  std::vector<DetectionResult> cells;  // row-major

  const DetectionResult& at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * cols + col];
  }
  DetectionResult& at(int row, int col) {
    return cells[static_cast<std::size_t>(row) * cols + col];
  }

  // Records carry absolute cube coordinates (the cells' pixel field), so
  // region-restricted runs stay addressable.
  std::vector<ResultRecord> records() const {
    std::vector<ResultRecord> out;
    out.reserve(cells.size());
    for (int row = 0; row < rows; ++row)
      for (int col = 0; col < cols; ++col) {
        const auto& c = at(row, col);
        ResultRecord rec;
        rec.row = c.pixel ? c.pixel->first : row;
        rec.col = c.pixel ? c.pixel->second : col;
        rec.statistic = c.statistic;
        rec.decision = c.decision;
        rec.alpha = c.alpha_hat.values();
        rec.valid = c.valid;
        out.push_back(std::move(rec));
      }
    return out;
  }
};

// Half-open pixel region [row_begin, row_end) x [col_begin, col_end).
struct PixelRegion {
  int row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;
  bool empty() const { return row_end <= row_begin || col_end <= col_begin; }
};

// Secondary data around a pixel: the background window minus the guard
// window, row-major order. Deterministic; the optional subsample keeps an
// evenly strided subset.
inline Eigen::MatrixXd extract_annulus(const HyperCube& cube, int row, int col,
                                       const DetectorConfig& cfg) {
  const int bg_half = cfg.bg_window / 2;
  const int guard_half = cfg.guard_window / 2;
  const int k_full = cfg.annulus_size();
  Eigen::MatrixXd secondary(cube.bands, k_full);
  int k = 0;
  for (int dr = -bg_half; dr <= bg_half; ++dr)
    for (int dc = -bg_half; dc <= bg_half; ++dc) {
      if (std::abs(dr) <= guard_half && std::abs(dc) <= guard_half) continue;
      for (int b = 0; b < cube.bands; ++b)
        secondary(b, k) = cube.at(row + dr, col + dc, b);
      ++k;
    }
  if (cfg.secondary_subsample && *cfg.secondary_subsample < k_full) {
    const int m = *cfg.secondary_subsample;
    Eigen::MatrixXd sub(cube.bands, m);
    for (int i = 0; i < m; ++i)
      sub.col(i) = secondary.col(static_cast<int>(
          static_cast<long long>(i) * k_full / m));
    return sub;
  }
  return secondary;
}

// Sliding-window detection over a cube (optionally restricted to a region).
// Pixels whose background window does not fit are marked invalid.
inline DetectionGrid sliding_detect(const HyperCube& cube,
                                    const EndmemberLibrary& lib,
                                    const DetectorConfig& cfg,
                                    std::optional<PixelRegion> region = {}) {
  cfg.validate();
  if (cube.bands != lib.bands())
    throw data_error("sliding_detect: cube/library band mismatch");
  if (cfg.bg_window > cube.rows || cfg.bg_window > cube.cols)
    throw config_error("sliding_detect: background window larger than image");
  const int k_eff = cfg.secondary_subsample
                        ? std::min(*cfg.secondary_subsample, cfg.annulus_size())
                        : cfg.annulus_size();
  if (k_eff <= cube.bands)
    throw config_error("sliding_detect: annulus gives K <= N; enlarge bg_window");

  PixelRegion reg = region.value_or(PixelRegion{0, cube.rows, 0, cube.cols});
  if (reg.row_begin < 0 || reg.col_begin < 0 || reg.row_end > cube.rows ||
      reg.col_end > cube.cols || reg.empty())
    throw config_error("sliding_detect: region outside cube");

  DetectionGrid grid;
  grid.rows = reg.row_end - reg.row_begin;
  grid.cols = reg.col_end - reg.col_begin;
  grid.cells.resize(static_cast<std::size_t>(grid.rows) * grid.cols);

  const int bg_half = cfg.bg_window / 2;
  const int r = lib.count();
  parallel_for(grid.cells.size(), cfg.threads, [&](std::size_t i) {
    const int row = reg.row_begin + static_cast<int>(i) / grid.cols;
    const int col = reg.col_begin + static_cast<int>(i) % grid.cols;
    DetectionResult& cell = grid.cells[i];
    cell.pixel = std::make_pair(row, col);
    const bool fits = row >= bg_half && row < cube.rows - bg_half &&
                      col >= bg_half && col < cube.cols - bg_half;
    if (!fits) {
      cell.valid = false;
      cell.alpha_hat = AbundanceVector::zeros(r);
      return;
    }
    const Eigen::MatrixXd secondary = extract_annulus(cube, row, col, cfg);
    const BackgroundContext ctx = build_context(secondary);
    DetectionResult res = glrt_statistic(ctx, cube.pixel(row, col), lib, cfg);
    res.pixel = std::make_pair(row, col);
    cell = std::move(res);
  });
  return grid;
}

// Fraction of valid non-target pixels whose statistic strictly exceeds the
// reference. The reference is either another pixel of the grid or a fixed
// threshold. target_mask (row-major, grid-shaped, true = target) excludes
// pixels from the count.
inline double false_alarm_rate(const DetectionGrid& grid,
                               std::pair<int, int> reference_pixel,
                               const std::vector<bool>* target_mask = nullptr) {
  const auto [row, col] = reference_pixel;
  if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols)
    throw config_error("false_alarm_rate: reference outside grid");
  const DetectionResult& ref = grid.at(row, col);
  if (!ref.valid) throw config_error("false_alarm_rate: reference pixel invalid");

  std::size_t exceed = 0, total = 0;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (!grid.cells[i].valid) continue;
    if (target_mask && (*target_mask)[i]) continue;
    if (static_cast<int>(i) == row * grid.cols + col) continue;
    ++total;
    if (grid.cells[i].statistic > ref.statistic) ++exceed;
  }
  if (total == 0) throw config_error("false_alarm_rate: no pixels to count");
  return static_cast<double>(exceed) / static_cast<double>(total);
}

inline double false_alarm_rate(const DetectionGrid& grid, double threshold,
                               const std::vector<bool>* target_mask = nullptr) {
  std::size_t exceed = 0, total = 0;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (!grid.cells[i].valid) continue;
    if (target_mask && (*target_mask)[i]) continue;
    ++total;
    if (grid.cells[i].statistic > threshold) ++exceed;
  }
  if (total == 0) throw config_error("false_alarm_rate: no pixels to count");
  return static_cast<double>(exceed) / static_cast<double>(total);
}

}  // namespace subpix

#endif  // SUBPIX_DETECTOR_HPP
