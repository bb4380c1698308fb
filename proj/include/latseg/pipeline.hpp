#pragma once

// End-to-end evaluation of one trajectory: segmentation on visible points,
// piecewise reconstruction at every time, and metrics against the labels.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "latseg/baselines.hpp"
#include "latseg/error.hpp"
#include "latseg/latent_ode.hpp"
#include "latseg/marginal_cost.hpp"
#include "latseg/metrics.hpp"
#include "latseg/parallel.hpp"
#include "latseg/segmentation.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

struct SegmentConfig {
  PeltConfig pelt{0.0, 200.0, 20, 1};
  MarginalCostConfig cost;
  bool segment = true;  // false: one segment per trajectory
  std::size_t f1_tolerance = 10;

  SegmentConfig() { cost.likelihood.samples = 100; }

  void validate() const {
    pelt.validate();
    require(cost.likelihood.samples >= 1, "segment: samples must be >= 1");
  }
};

struct TrajectoryOutcome {
  std::vector<std::size_t> changepoints;          // indices into the full trajectory
  std::vector<std::size_t> visible_changepoints;  // indices into the visible subsequence
  double objective = NAN;
  double joint_log_probability = NAN;
  PeltStats stats;
  double seconds = 0.0;
  Tensor reconstruction;  // one row per trajectory time; empty for baselines
  SegMetrics segmentation;
  ReconMetrics reconstruction_error;
  bool has_reconstruction = false;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void score(const Trajectory& tr, TrajectoryOutcome& out, std::size_t tolerance) {
  out.segmentation = segmentation_metrics(Segmentation{tr.changepoints}, Segmentation{out.changepoints}, tr.size(), tolerance);
  if (out.has_reconstruction) out.reconstruction_error = mse_split(tr.values, out.reconstruction, tr.mask);
}

}  // namespace detail

/// LatSegODE on one trajectory. Segmentation sees visible points only;
/// reconstruction covers every time of the trajectory.
inline TrajectoryOutcome segment_trajectory(const LatentOdeModel& model, const Trajectory& tr, const SegmentConfig& cfg) {
  cfg.validate();
  tr.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::size_t> visible = tr.visible_indices();
  require(visible.size() >= 2, "segment: trajectory needs at least two visible observations");
  const Series obs = tr.series().select(visible);
  const MarginalCost cost(model, obs, cfg.cost);
  TrajectoryOutcome out;
  const std::size_t m = std::max(cfg.pelt.min_length, cfg.cost.min_length);
  if (cfg.segment && obs.size() >= m) {
    const SegmentationResult r = pelt_segment(cost, cfg.pelt);
    out.visible_changepoints = r.segmentation.changepoints;
    out.objective = r.objective;
    out.stats = r.stats;
  } else {
    out.objective = cost.cost(0, obs.size() - 1);
  }
  out.joint_log_probability = joint_log_probability(cost, Segmentation{out.visible_changepoints});
  out.changepoints = visible_to_original(out.visible_changepoints, visible);
  out.reconstruction = reconstruct(model, obs, Segmentation{out.visible_changepoints}, tr.times);
  out.has_reconstruction = true;
  out.seconds = detail::seconds_since(t0);
  detail::score(tr, out, cfg.f1_tolerance);
  return out;
}

enum class BaselineKind { rbf, ar, norm };

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::rbf: return "rbf";
    case BaselineKind::ar: return "ar";
    case BaselineKind::norm: return "norm";
  }
  return "?";
}

struct BaselineConfig {
  std::size_t grid_size = 0;  // 0: trajectory length
  std::size_t min_length = 20;
  ArCostConfig ar;
  RbfCostConfig rbf;
  std::size_t f1_tolerance = 10;
};

inline std::unique_ptr<CostFunction> make_baseline_cost(BaselineKind kind, const Tensor& values, const BaselineConfig& cfg) {
  switch (kind) {
    case BaselineKind::rbf: return std::make_unique<RbfCost>(values, cfg.rbf);
    case BaselineKind::ar: return std::make_unique<ArCost>(values, cfg.ar);
    case BaselineKind::norm: return std::make_unique<NormCost>(values);
  }
  throw InvalidArgument("unknown baseline");
}

/// Known-k baseline: visible points interpolated to a uniform grid, exact
/// search for the true changepoint count, boundaries mapped back.
inline TrajectoryOutcome baseline_trajectory(BaselineKind kind, const Trajectory& tr, const BaselineConfig& cfg) {
  tr.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Series obs = tr.visible();
  require(obs.size() >= 2, "baseline: trajectory needs at least two visible observations");
  const Series grid = interpolate_to_grid(obs, cfg.grid_size ? cfg.grid_size : tr.size());
  TrajectoryOutcome out;
  const std::size_t k = tr.changepoints.size();
  if (k > 0) {
    const std::unique_ptr<CostFunction> cost = make_baseline_cost(kind, grid.values, cfg);
    // Short grids cannot honour the full minimum length for k + 1 segments.
    const std::size_t fit = std::max<std::size_t>(1, grid.size() / (k + 1));
    const SegmentationResult r = segment_known_k(*cost, k, std::min(cfg.min_length, fit));
    out.objective = r.objective;
    out.stats = r.stats;
    out.changepoints = map_to_original(grid.times, r.segmentation.changepoints, tr.times);
  }
  out.seconds = detail::seconds_since(t0);
  detail::score(tr, out, cfg.f1_tolerance);
  return out;
}

struct MethodSummary {
  std::string method;
  std::size_t trajectories = 0;
  double rand_index = NAN;
  double hausdorff = NAN;  // over trajectories with true and predicted changepoints
  std::size_t hausdorff_count = 0;
  double f1 = NAN;
  double annotation_error = NAN;
  double abs_annotation_error = NAN;
  double mse_total = NAN;
  double mse_interpolation = NAN;
  double mse_extrapolation = NAN;
  double seconds = 0.0;
  std::size_t cost_evaluations = 0;
  std::size_t pruned = 0;
  double objective = 0.0;
};

/// Means over trajectories. Hausdorff skips trajectories without true
/// changepoints and undefined values; MSE means skip NaN entries.
inline MethodSummary summarize(const std::string& method, const std::vector<Trajectory>& data,
                               const std::vector<TrajectoryOutcome>& rows) {
  require(data.size() == rows.size(), "summarize: row count mismatch");
  MethodSummary s;
  s.method = method;
  s.trajectories = rows.size();
  if (rows.empty()) return s;
  double ri = 0, f1 = 0, ae = 0, aae = 0, hd = 0;
  double mse[3] = {0, 0, 0};
  std::size_t mse_n[3] = {0, 0, 0};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TrajectoryOutcome& r = rows[i];
    ri += r.segmentation.rand_index;
    f1 += r.segmentation.f1.f1;
    ae += static_cast<double>(r.segmentation.annotation_error);
    aae += std::abs(static_cast<double>(r.segmentation.annotation_error));
    if (!data[i].changepoints.empty() && r.segmentation.hausdorff.defined) {
      hd += r.segmentation.hausdorff.value;
      ++s.hausdorff_count;
    }
    if (r.has_reconstruction) {
      const double v[3] = {r.reconstruction_error.total, r.reconstruction_error.interpolation,
                           r.reconstruction_error.extrapolation};
      for (int c = 0; c < 3; ++c)
        if (std::isfinite(v[c])) {
          mse[c] += v[c];
          ++mse_n[c];
        }
    }
    s.seconds += r.seconds;
    s.cost_evaluations += r.stats.cost_evaluations;
    s.pruned += r.stats.pruned;
    s.objective += r.objective;
  }
  const double n = static_cast<double>(rows.size());
  s.rand_index = ri / n;
  s.f1 = f1 / n;
  s.annotation_error = ae / n;
  s.abs_annotation_error = aae / n;
  if (s.hausdorff_count) s.hausdorff = hd / static_cast<double>(s.hausdorff_count);
  if (mse_n[0]) s.mse_total = mse[0] / static_cast<double>(mse_n[0]);
  if (mse_n[1]) s.mse_interpolation = mse[1] / static_cast<double>(mse_n[1]);
  if (mse_n[2]) s.mse_extrapolation = mse[2] / static_cast<double>(mse_n[2]);
  return s;
}

/// Runs `fn(i)` for every trajectory on `threads` workers, results by index.
template <class Fn>
std::vector<TrajectoryOutcome> run_all(std::size_t count, std::size_t threads, Fn fn) {
  std::vector<TrajectoryOutcome> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace latseg
