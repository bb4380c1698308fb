#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/parallel.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

/// Segment cost bound to one series; lower is better. Implementations must be
/// safe to call concurrently.
class CostFunction {
 public:
  virtual ~CostFunction() = default;
  /// Cost of observations [start, end], inclusive.
  virtual double cost(std::size_t start, std::size_t end) const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t min_length() const { return 1; }
};

inline constexpr double no_pruning = std::numeric_limits<double>::infinity();

struct PeltConfig {
  double beta = 0.0;
  double K = no_pruning;
  std::size_t min_length = 1;
  std::size_t threads = 1;

  void validate() const {
    require(beta >= 0.0 && !std::isnan(beta), "pelt: beta must be >= 0");
    require(K >= 0.0 && !std::isnan(K), "pelt: K must be >= 0");
    require(min_length >= 1, "pelt: min_length must be >= 1");
  }
};

struct PeltStats {
  std::size_t cost_evaluations = 0;
  std::size_t pruned = 0;          // candidates removed by the pruning rule
  std::size_t max_candidates = 0;  // largest candidate set scanned at one step
};

struct SegmentationResult {
  Segmentation segmentation;
  double objective = 0.0;  // Σ cost + β per segment, with the initial −β
  PeltStats stats;
};

namespace detail {

struct Partial {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> changepoints;
  bool feasible() const { return std::isfinite(objective); }
};

/// (objective, changepoint count, lexicographic changepoints).
inline bool better(double obj, const std::vector<std::size_t>& cps, const Partial& current) {
  if (obj != current.objective) return obj < current.objective;
  if (cps.size() != current.changepoints.size()) return cps.size() < current.changepoints.size();
  return cps < current.changepoints;
}

inline SegmentationResult search(const CostFunction& cost, const PeltConfig& cfg, bool prune) {
  cfg.validate();
  const std::size_t n = cost.size();
  const std::size_t m = std::max(cfg.min_length, cost.min_length());
  if (n < m) {
    throw InvalidArgument("segmentation: trajectory length " + std::to_string(n) + " is shorter than the minimum segment length " +
                          std::to_string(m));
  }
  std::vector<Partial> F(n + 1);
  F[0].objective = -cfg.beta;
  std::vector<std::size_t> R = {0};
  SegmentationResult out;

  for (std::size_t s = m; s <= n; ++s) {
    std::vector<std::size_t> active;
    for (std::size_t tau : R)
      if (tau + m <= s) active.push_back(tau);
    out.stats.max_candidates = std::max(out.stats.max_candidates, active.size());
    std::vector<double> seg_cost(active.size());
    parallel_for(active.size(), cfg.threads, [&](std::size_t k) { seg_cost[k] = cost.cost(active[k], s - 1); });
    out.stats.cost_evaluations += active.size();

    std::vector<double> before_beta(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t tau = active[k];
      before_beta[k] = F[tau].objective + seg_cost[k];
      const double obj = before_beta[k] + cfg.beta;
      std::vector<std::size_t> cps = F[tau].changepoints;
      if (tau > 0) cps.push_back(tau - 1);
      if (better(obj, cps, F[s])) {
        F[s].objective = obj;
        F[s].changepoints = std::move(cps);
      }
    }
    if (!F[s].feasible()) throw NumericalError("segmentation: no finite objective at index " + std::to_string(s));

    if (prune && std::isfinite(cfg.K)) {
      std::vector<std::size_t> keep;
      keep.reserve(R.size() + 1);
      std::size_t k = 0;
      for (std::size_t tau : R) {
        if (k < active.size() && active[k] == tau) {
          if (before_beta[k] > F[s].objective + cfg.K) {
            ++out.stats.pruned;
            ++k;
            continue;
          }
          ++k;
        }
        keep.push_back(tau);
      }
      R = std::move(keep);
    }
    R.push_back(s);
  }
  out.segmentation.changepoints = std::move(F[n].changepoints);
  out.objective = F[n].objective;
  return out;
}

}  // namespace detail

/// Exact minimiser of Σ (cost + β) over all segmentations honouring the
/// minimum segment length.
inline SegmentationResult optimal_partition(const CostFunction& cost, double beta, std::size_t min_length = 1,
                                            std::size_t threads = 1) {
  PeltConfig cfg;
  cfg.beta = beta;
  cfg.min_length = min_length;
  cfg.threads = threads;
  return detail::search(cost, cfg, false);
}

/// Optimal partitioning with PELT pruning: a candidate τ is dropped once
/// F(τ) + C(τ..s−1) > F(s) + K. K = no_pruning disables the rule.
inline SegmentationResult pelt_segment(const CostFunction& cost, const PeltConfig& cfg) {
  return detail::search(cost, cfg, true);
}

/// Σ (cost + β) with the same accumulation order as the search.
inline double segmentation_objective(const CostFunction& cost, const Segmentation& seg, double beta) {
  double acc = -beta;
  for (const auto& [s, e] : seg.segments(cost.size())) acc = acc + cost.cost(s, e) + beta;
  return acc;
}

}  // namespace latseg
