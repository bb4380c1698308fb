#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/tensor.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

/// Fraction of index pairs on which both segmentations agree about
/// same-segment membership, counted from segment overlaps.
inline double rand_index(const Segmentation& truth, const Segmentation& pred, std::size_t n) {
  require(n >= 2, "rand_index: need n >= 2");
  truth.validate(n);
  pred.validate(n);
  auto pairs = [](std::size_t k) { return static_cast<double>(k) * static_cast<double>(k == 0 ? 0 : k - 1) / 2.0; };
  const auto a = truth.segments(n), b = pred.segments(n);
  double same_t = 0.0, same_p = 0.0, same_both = 0.0;
  for (const auto& [s, e] : a) same_t += pairs(e - s + 1);
  for (const auto& [s, e] : b) same_p += pairs(e - s + 1);
  std::size_t j = 0;
  for (const auto& [s, e] : a) {
    while (j < b.size() && b[j].second < s) ++j;
    for (std::size_t k = j; k < b.size() && b[k].first <= e; ++k) {
      const std::size_t lo = std::max(s, b[k].first), hi = std::min(e, b[k].second);
      same_both += pairs(hi - lo + 1);
    }
  }
  const double total = pairs(n);
  return (total - same_t - same_p + 2.0 * same_both) / total;
}

struct HausdorffResult {
  double value = std::numeric_limits<double>::infinity();
  bool defined = false;  // false when either set is empty
};

/// max(max_t min_p |t − p|, max_p min_t |t − p|) in index units.
inline HausdorffResult hausdorff(std::span<const std::size_t> truth, std::span<const std::size_t> pred) {
  if (truth.empty() || pred.empty()) return {};
  auto directed = [](std::span<const std::size_t> from, std::span<const std::size_t> to) {
    double worst = 0.0;
    for (std::size_t x : from) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t y : to) best = std::min(best, std::abs(static_cast<double>(x) - static_cast<double>(y)));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return {std::max(directed(truth, pred), directed(pred, truth)), true};
}

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
};

/// One-to-one matching within `tolerance` indices, closest pairs first.
inline F1Result f1_score(std::span<const std::size_t> truth, std::span<const std::size_t> pred, std::size_t tolerance = 10) {
  F1Result r;
  if (truth.empty() && pred.empty()) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  if (truth.empty() || pred.empty()) return r;
  struct Pair {
    std::size_t dist, t, p;
  };
  std::vector<Pair> cand;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const std::size_t d = truth[i] > pred[j] ? truth[i] - pred[j] : pred[j] - truth[i];
      if (d <= tolerance) cand.push_back({d, i, j});
    }
  std::sort(cand.begin(), cand.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.dist, x.t, x.p) < std::tie(y.dist, y.t, y.p);
  });
  std::vector<bool> used_t(truth.size()), used_p(pred.size());
  for (const Pair& c : cand) {
    if (used_t[c.t] || used_p[c.p]) continue;
    used_t[c.t] = used_p[c.p] = true;
    ++r.matched;
  }
  r.precision = static_cast<double>(r.matched) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(r.matched) / static_cast<double>(truth.size());
  r.f1 = r.matched == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

/// Predicted count minus true count.
inline long annotation_error(std::span<const std::size_t> truth, std::span<const std::size_t> pred) {
  return static_cast<long>(pred.size()) - static_cast<long>(truth.size());
}

struct SegMetrics {
  double rand_index = 0.0;
  HausdorffResult hausdorff;
  F1Result f1;
  long annotation_error = 0;
};

inline SegMetrics segmentation_metrics(const Segmentation& truth, const Segmentation& pred, std::size_t n,
                                       std::size_t tolerance = 10) {
  SegMetrics m;
  m.rand_index = rand_index(truth, pred, n);
  m.hausdorff = hausdorff(truth.changepoints, pred.changepoints);
  m.f1 = f1_score(truth.changepoints, pred.changepoints, tolerance);
  m.annotation_error = annotation_error(truth.changepoints, pred.changepoints);
  return m;
}

struct ReconMetrics {
  double total = 0.0;          // all held-out points
  double interpolation = 0.0;  // interp-heldout points
  double extrapolation = 0.0;  // extrap-heldout points
  std::size_t interpolation_count = 0;
  std::size_t extrapolation_count = 0;
};

/// Per-class mean squared errors over held-out points. `pred` rows align with
/// `truth` rows; NaN rows mark missing predictions, which are rejected at
/// held-out points. Classes without points report NaN.
inline ReconMetrics mse_split(const Tensor& truth, const Tensor& pred, std::span<const MaskClass> mask) {
  require(truth.same_matrix_shape(pred), "mse_split: prediction shape does not match truth");
  require(mask.size() == truth.rows(), "mse_split: mask length mismatch");
  double se_i = 0.0, se_e = 0.0;
  ReconMetrics r;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == MaskClass::visible) continue;
    double se = 0.0;
    for (std::size_t d = 0; d < truth.cols(); ++d) {
      const double p = pred.at(i, d);
      if (!std::isfinite(p)) throw InvalidArgument("mse_split: missing prediction at held-out index " + std::to_string(i));
      se += (p - truth.at(i, d)) * (p - truth.at(i, d));
    }
    if (mask[i] == MaskClass::interp_heldout) {
      se_i += se;
      ++r.interpolation_count;
    } else {
      se_e += se;
      ++r.extrapolation_count;
    }
  }
  const double D = static_cast<double>(truth.cols());
  auto mean = [D](double se, std::size_t n) { return n ? se / (static_cast<double>(n) * D) : std::nan(""); };
  r.interpolation = mean(se_i, r.interpolation_count);
  r.extrapolation = mean(se_e, r.extrapolation_count);
  r.total = mean(se_i + se_e, r.interpolation_count + r.extrapolation_count);
  return r;
}

/// Maps changepoints on the visible subsequence to full-trajectory indices:
/// a boundary before visible position k + 1 lands just before its original index.
inline std::vector<std::size_t> visible_to_original(const std::vector<std::size_t>& visible_cps,
                                                    std::span<const std::size_t> visible_index) {
  std::vector<std::size_t> out;
  for (std::size_t cp : visible_cps) {
    require(cp + 1 < visible_index.size(), "visible_to_original: changepoint out of range");
    out.push_back(visible_index[cp + 1] - 1);
  }
  return out;
}

}  // namespace latseg
