#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/latent_ode.hpp"
#include "latseg/rng.hpp"
#include "latseg/segmentation.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

struct MarginalCostConfig {
  MarginalLikelihoodConfig likelihood;
  int time_decimals = 2;  // negative keeps times unrounded
  std::size_t min_length = 1;
};

/// Segment times re-based to 0 and rounded; observations whose rounded time
/// repeats an earlier one are dropped.
inline Series prepare_segment(const Series& s, std::size_t start, std::size_t end, int decimals) {
  Series seg = s.slice(start, end).rebased();
  if (decimals < 0) return seg;
  const double scale = std::pow(10.0, decimals);
  std::vector<std::size_t> keep;
  std::vector<double> rounded;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const double t = std::round(seg.times[i] * scale) / scale;
    if (!rounded.empty() && t <= rounded.back()) continue;
    keep.push_back(i);
    rounded.push_back(t);
  }
  Series out = seg.select(keep);
  out.times = std::move(rounded);
  return out;
}

/// −log p(segment) under the model, memoised per (start, end) with a
/// per-segment seed so every call for a segment returns the same value.
/// Holds a reference to the model, which must outlive the cost.
class MarginalCost final : public CostFunction {
 public:
  MarginalCost(const LatentOdeModel& model, Series series, MarginalCostConfig cfg)
      : model_(model), series_(std::move(series)), cfg_(cfg) {
    series_.validate();
    cfg_.likelihood.validate(model.config);
    require(series_.dim() == model.config.data_dim, "marginal cost: data dimension does not match the model");
  }

  double cost(std::size_t start, std::size_t end) const override {
    require(start <= end && end < series_.size(), "marginal cost: bad segment range");
    const std::uint64_t key = static_cast<std::uint64_t>(start) * series_.size() + end;
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    const Series seg = prepare_segment(series_, start, end, cfg_.time_decimals);
    MarginalLikelihoodConfig ml = cfg_.likelihood;
    ml.seed = derive_seed(cfg_.likelihood.seed, {start, end});
    const double value = -marginal_log_likelihood(model_, seg.values, seg.times, ml).log_likelihood;
    std::lock_guard lock(mutex_);
    memo_.emplace(key, value);
    return value;
  }

  std::size_t size() const override { return series_.size(); }
  std::size_t min_length() const override { return cfg_.min_length; }
  std::size_t cached() const {
    std::lock_guard lock(mutex_);
    return memo_.size();
  }

 private:
  const LatentOdeModel& model_;
  Series series_;
  MarginalCostConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

/// Σ over segments of log p(segment).
inline double joint_log_probability(const CostFunction& cost, const Segmentation& seg) {
  seg.validate(cost.size());
  double total = 0.0;
  for (const auto& [s, e] : seg.segments(cost.size())) total -= cost.cost(s, e);
  return total;
}

inline double joint_log_probability(const LatentOdeModel& model, const Series& series, const Segmentation& seg,
                                    const MarginalCostConfig& cfg) {
  return joint_log_probability(MarginalCost(model, series, cfg), seg);
}

/// Piecewise reconstruction. Segment i owns queries in [t_start(i), t_start(i+1));
/// the first segment also owns earlier queries and the last owns later ones.
/// Each segment is encoded from its own observations (re-based to its first
/// time) and decoded from the posterior mean.
inline Tensor reconstruct(const LatentOdeModel& model, const Series& series, const Segmentation& seg,
                          std::span<const double> queries) {
  series.validate();
  seg.validate(series.size());
  for (std::size_t i = 1; i < queries.size(); ++i) {
    if (!(queries[i] > queries[i - 1])) throw InvalidArgument("reconstruct: query times must be strictly increasing");
  }
  require(!queries.empty(), "reconstruct: need at least one query time");
  const auto segments = seg.segments(series.size());
  Tensor out = Tensor::matrix(queries.size(), model.config.data_dim);
  std::size_t q = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto [s, e] = segments[i];
    const double origin = series.times[s];
    const double next = i + 1 < segments.size() ? series.times[segments[i + 1].first] : INFINITY;
    std::vector<double> local;
    const std::size_t first = q;
    while (q < queries.size() && queries[q] < next) local.push_back(queries[q++] - origin);
    if (local.empty()) continue;
    const Series obs = series.slice(s, e).rebased();
    const Posterior post = encode(model, obs.values, obs.times);
    const Tensor pred = decode_at(model, post.mean, 0.0, local);
    for (std::size_t k = 0; k < local.size(); ++k)
      for (std::size_t d = 0; d < model.config.data_dim; ++d) out.at(first + k, d) = pred.at(k, d);
  }
  return out;
}

}  // namespace latseg
