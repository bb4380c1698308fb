#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latseg/error.hpp"
#include "latseg/segmentation.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

namespace detail {

inline void check_range(const Tensor& values, std::size_t start, std::size_t end, std::size_t min_len, const char* who) {
  if (start > end || end >= values.rows()) throw InvalidArgument(std::string(who) + ": bad segment range");
  if (end - start + 1 < min_len) {
    throw InvalidArgument(std::string(who) + ": segment of length " + std::to_string(end - start + 1) +
                          " is shorter than " + std::to_string(min_len));
  }
}

inline double squared_distance(const Tensor& v, std::size_t a, std::size_t b) {
  double d2 = 0.0;
  for (std::size_t c = 0; c < v.cols(); ++c) {
    const double d = v.at(a, c) - v.at(b, c);
    d2 += d * d;
  }
  return d2;
}

}  // namespace detail

// ---------------------------------------------------------------- RBF

struct RbfCostConfig {
  double gamma = 0.0;  // 0 selects the median heuristic
};

/// 1 / median of pairwise squared distances (1 when that median is 0).
inline double median_heuristic_gamma(const Tensor& values) {
  const std::size_t n = values.rows();
  std::vector<double> d2;
  d2.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d2.push_back(detail::squared_distance(values, i, j));
  if (d2.empty()) return 1.0;
  const auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double med = *mid;
  if (d2.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d2.begin(), mid));
  return med > 0.0 ? 1.0 / med : 1.0;
}

/// Σ_t k(x_t, x_t) − (1/|I|) Σ_{s,t} k(x_s, x_t), k(x, y) = exp(−γ‖x − y‖²).
inline double rbf_cost(const Tensor& values, std::size_t start, std::size_t end, double gamma) {
  detail::check_range(values, start, end, 2, "rbf_cost");
  require(gamma > 0, "rbf_cost: gamma must be positive");
  double gram = 0.0;
  for (std::size_t i = start; i <= end; ++i)
    for (std::size_t j = start; j <= end; ++j) gram += std::exp(-gamma * detail::squared_distance(values, i, j));
  const double len = static_cast<double>(end - start + 1);
  return std::max(0.0, len - gram / len);
}

/// Bound RBF cost with O(1) queries from a prefix-summed Gram matrix.
class RbfCost final : public CostFunction {
 public:
  RbfCost(const Tensor& values, RbfCostConfig cfg = {})
      : n_(values.rows()), gamma_(cfg.gamma > 0 ? cfg.gamma : median_heuristic_gamma(values)), prefix_((n_ + 1) * (n_ + 1), 0.0) {
    require(cfg.gamma >= 0, "rbf: gamma must be positive");
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        const double k = std::exp(-gamma_ * detail::squared_distance(values, i, j));
        at(i + 1, j + 1) = k + at(i, j + 1) + at(i + 1, j) - at(i, j);
      }
  }

  double cost(std::size_t start, std::size_t end) const override {
    const double block = at(end + 1, end + 1) - at(start, end + 1) - at(end + 1, start) + at(start, start);
    const double len = static_cast<double>(end - start + 1);
    return std::max(0.0, len - block / len);
  }
  std::size_t size() const override { return n_; }
  std::size_t min_length() const override { return 2; }
  double gamma() const { return gamma_; }

 private:
  double& at(std::size_t i, std::size_t j) { return prefix_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return prefix_[i * (n_ + 1) + j]; }

  std::size_t n_;
  double gamma_;
  std::vector<double> prefix_;
};

// ---------------------------------------------------------------- NORM

inline constexpr double norm_cost_ridge = 1e-6;

/// |I| · log det(Σ̂_I + λI), Σ̂_I the biased empirical covariance.
inline double norm_cost(const Tensor& values, std::size_t start, std::size_t end) {
  const std::size_t D = values.cols();
  detail::check_range(values, start, end, 1, "norm_cost");
  const std::size_t len = end - start + 1;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
  for (std::size_t t = start; t <= end; ++t)
    for (std::size_t c = 0; c < D; ++c) mean(static_cast<Eigen::Index>(c)) += values.at(t, c);
  mean /= static_cast<double>(len);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
  Eigen::VectorXd r(static_cast<Eigen::Index>(D));
  for (std::size_t t = start; t <= end; ++t) {
    for (std::size_t c = 0; c < D; ++c) r(static_cast<Eigen::Index>(c)) = values.at(t, c) - mean(static_cast<Eigen::Index>(c));
    cov.noalias() += r * r.transpose();
  }
  cov /= static_cast<double>(len);
  cov.diagonal().array() += norm_cost_ridge;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("norm_cost: covariance not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return static_cast<double>(len) * logdet;
}

class NormCost final : public CostFunction {
 public:
  explicit NormCost(const Tensor& values) : values_(values) {}
  double cost(std::size_t start, std::size_t end) const override { return norm_cost(values_, start, end); }
  std::size_t size() const override { return values_.rows(); }
  std::size_t min_length() const override { return values_.cols() + 1; }

 private:
  Tensor values_;
};

// ---------------------------------------------------------------- AR

struct ArCostConfig {
  std::size_t order = 10;
};

inline constexpr double ar_cost_ridge = 1e-8;

/// Residual sum of squares of a per-dimension AR(p) fit with intercept.
/// The ridge keeps the normal equations solvable on rank-deficient windows.
inline double ar_cost(const Tensor& values, std::size_t start, std::size_t end, const ArCostConfig& cfg) {
  require(cfg.order >= 1, "ar_cost: order must be >= 1");
  const std::size_t p = cfg.order;
  detail::check_range(values, start, end, p + 2, "ar_cost");
  const std::size_t rows = end - start + 1 - p;
  const auto R = static_cast<Eigen::Index>(rows), P = static_cast<Eigen::Index>(p);
  double total = 0.0;
  for (std::size_t c = 0; c < values.cols(); ++c) {
    Eigen::MatrixXd A(R, P + 1);
    Eigen::VectorXd y(R);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t t = start + p + r;
      y(static_cast<Eigen::Index>(r)) = values.at(t, c);
      for (std::size_t lag = 1; lag <= p; ++lag) A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(lag - 1)) = values.at(t - lag, c);
      A(static_cast<Eigen::Index>(r), P) = 1.0;
    }
    Eigen::MatrixXd normal = A.transpose() * A;
    normal.diagonal().array() += ar_cost_ridge;
    const auto ldlt = normal.ldlt();
    Eigen::VectorXd delta = ldlt.solve(A.transpose() * y);
    delta += ldlt.solve(A.transpose() * (y - A * delta));  // one refinement step toward the unridged fit
    total += (y - A * delta).squaredNorm();
  }
  return total;
}

class ArCost final : public CostFunction {
 public:
  ArCost(const Tensor& values, ArCostConfig cfg = {}) : values_(values), cfg_(cfg) {
    require(cfg.order >= 1, "ar: order must be >= 1");
  }
  double cost(std::size_t start, std::size_t end) const override { return ar_cost(values_, start, end, cfg_); }
  std::size_t size() const override { return values_.rows(); }
  std::size_t min_length() const override { return cfg_.order + 2; }

 private:
  Tensor values_;
  ArCostConfig cfg_;
};

// ---------------------------------------------------------------- preprocessing

/// Linear interpolation onto `grid_size` uniform times spanning the series.
inline Series interpolate_to_grid(const Series& s, std::size_t grid_size) {
  s.validate();
  require(s.size() >= 2, "interpolate_to_grid: need at least 2 observations");
  require(grid_size >= 2, "interpolate_to_grid: grid size must be >= 2");
  const double t0 = s.times.front(), t1 = s.times.back();
  Series g;
  g.values = Tensor::matrix(grid_size, s.dim());
  std::size_t k = 0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double t = i + 1 == grid_size ? t1 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(grid_size - 1);
    g.times.push_back(t);
    while (k + 2 < s.size() && s.times[k + 1] <= t) ++k;
    const double w = (t - s.times[k]) / (s.times[k + 1] - s.times[k]);
    for (std::size_t c = 0; c < s.dim(); ++c) {
      const double a = s.values.at(k, c), b = s.values.at(k + 1, c);
      g.values.at(i, c) = w == 0.0 ? a : (w == 1.0 ? b : a + w * (b - a));
    }
  }
  return g;
}

/// Maps grid changepoints to the nearest index of `original_times`, keeping
/// the result a valid changepoint list for that length.
inline std::vector<std::size_t> map_to_original(std::span<const double> grid_times, const std::vector<std::size_t>& grid_cps,
                                                std::span<const double> original_times) {
  const std::size_t n = original_times.size();
  std::vector<std::size_t> out;
  if (n < 2) return out;
  for (std::size_t g : grid_cps) {
    const double t = grid_times[g];
    const auto it = std::lower_bound(original_times.begin(), original_times.end(), t);
    auto idx = static_cast<std::size_t>(it - original_times.begin());
    if (idx == n || (idx > 0 && t - original_times[idx - 1] <= original_times[idx] - t)) --idx;
    idx = std::min(idx, n - 2);
    if (out.empty() || idx > out.back()) out.push_back(idx);
  }
  return out;
}

// ---------------------------------------------------------------- known-k

/// Exact minimum of Σ cost over segmentations with exactly k changepoints.
inline SegmentationResult segment_known_k(const CostFunction& cost, std::size_t k, std::size_t min_length = 1) {
  const std::size_t n = cost.size();
  const std::size_t m = std::max(min_length, cost.min_length());
  require(k >= 1, "segment_known_k: k must be >= 1");
  if ((k + 1) * m > n) {
    throw InvalidArgument("segment_known_k: " + std::to_string(k) + " changepoints infeasible for length " +
                          std::to_string(n) + " with minimum segment length " + std::to_string(m));
  }
  // G[j][s]: best split of the first s points into j + 1 segments.
  std::vector<std::vector<detail::Partial>> G(k + 1, std::vector<detail::Partial>(n + 1));
  SegmentationResult out;
  std::vector<double> memo((n + 1) * (n + 1), std::numeric_limits<double>::quiet_NaN());
  auto segment_cost = [&](std::size_t tau, std::size_t s) {
    double& c = memo[tau * (n + 1) + s];
    if (std::isnan(c)) {
      c = cost.cost(tau, s - 1);
      ++out.stats.cost_evaluations;
    }
    return c;
  };
  for (std::size_t s = m; s <= n; ++s) {
    G[0][s].objective = segment_cost(0, s);
  }
  for (std::size_t j = 1; j <= k; ++j) {
    for (std::size_t s = (j + 1) * m; s <= n; ++s) {
      for (std::size_t tau = j * m; tau + m <= s; ++tau) {
        if (!G[j - 1][tau].feasible()) continue;
        const double obj = G[j - 1][tau].objective + segment_cost(tau, s);
        std::vector<std::size_t> cps = G[j - 1][tau].changepoints;
        cps.push_back(tau - 1);
        if (detail::better(obj, cps, G[j][s])) {
          G[j][s].objective = obj;
          G[j][s].changepoints = std::move(cps);
        }
      }
    }
  }
  out.objective = G[k][n].objective;
  out.segmentation.changepoints = std::move(G[k][n].changepoints);
  return out;
}

}  // namespace latseg
