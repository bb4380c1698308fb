#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

/// Observation mask classes, serialised as 0/1/2.
enum class MaskClass : std::uint8_t { visible = 0, interp_heldout = 1, extrap_heldout = 2 };

/// Times plus an (N x D) value matrix; what segmentation costs operate on.
struct Series {
  std::vector<double> times;
  Tensor values;

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return values.cols(); }

  void validate() const {
    require(!times.empty(), "series: no observations");
    require(values.rows() == times.size(), "series: values/time count mismatch");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw InvalidArgument("series: times must be strictly increasing");
    }
  }

  /// Rows [begin, end] inclusive.
  Series slice(std::size_t begin, std::size_t end) const {
    require(begin <= end && end < size(), "series: bad slice");
    Series s;
    s.times.assign(times.begin() + static_cast<std::ptrdiff_t>(begin), times.begin() + static_cast<std::ptrdiff_t>(end) + 1);
    const std::size_t D = dim();
    std::vector<double> v(values.data().begin() + static_cast<std::ptrdiff_t>(begin * D),
                          values.data().begin() + static_cast<std::ptrdiff_t>((end + 1) * D));
    s.values = Tensor::matrix(end - begin + 1, D, std::move(v));
    return s;
  }

  Series select(const std::vector<std::size_t>& rows) const {
    require(!rows.empty(), "series: empty selection");
    Series s;
    const std::size_t D = dim();
    std::vector<double> v;
    v.reserve(rows.size() * D);
    for (std::size_t r : rows) {
      s.times.push_back(times.at(r));
      for (std::size_t c = 0; c < D; ++c) v.push_back(values.at(r, c));
    }
    s.values = Tensor::matrix(rows.size(), D, std::move(v));
    return s;
  }

  /// Copy with times shifted so the first observation is at t = 0.
  Series rebased() const {
    Series s = *this;
    const double t0 = times.front();
    for (double& t : s.times) t -= t0;
    return s;
  }
};

/// Changepoints are segment-final indices; the final index N-1 is implicit.
struct Segmentation {
  std::vector<std::size_t> changepoints;

  /// Inclusive (start, end) pairs covering [0, n).
  std::vector<std::pair<std::size_t, std::size_t>> segments(std::size_t n) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t start = 0;
    for (std::size_t cp : changepoints) {
      out.emplace_back(start, cp);
      start = cp + 1;
    }
    out.emplace_back(start, n - 1);
    return out;
  }

  /// Strictly increasing, inside [0, n-2], every segment at least min_length long.
  void validate(std::size_t n, std::size_t min_length = 1) const {
    require(n >= 1, "segmentation: empty trajectory");
    std::size_t start = 0;
    for (std::size_t i = 0; i < changepoints.size(); ++i) {
      const std::size_t cp = changepoints[i];
      if (i > 0 && cp <= changepoints[i - 1]) throw InvalidArgument("segmentation: changepoints must increase");
      if (cp + 1 >= n) throw InvalidArgument("segmentation: changepoint " + std::to_string(cp) + " out of range");
      if (cp + 1 - start < min_length) throw InvalidArgument("segmentation: segment shorter than minimum length");
      start = cp + 1;
    }
    if (n - start < min_length) throw InvalidArgument("segmentation: final segment shorter than minimum length");
  }

  friend bool operator==(const Segmentation&, const Segmentation&) = default;
};

struct Trajectory {
  std::vector<double> times;
  Tensor values;  // (N x D)
  std::vector<MaskClass> mask;
  std::vector<std::size_t> changepoints;
  /// Generator parameters per segment, for diagnostics only.
  std::vector<std::map<std::string, double>> segment_params;

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return values.cols(); }

  void validate() const {
    Series{times, values}.validate();
    require(mask.size() == times.size(), "trajectory: mask length mismatch");
    Segmentation{changepoints}.validate(size());
  }

  Series series() const { return Series{times, values}; }

  std::vector<std::size_t> indices_with(MaskClass m) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] == m) idx.push_back(i);
    return idx;
  }

  std::vector<std::size_t> visible_indices() const { return indices_with(MaskClass::visible); }
  Series visible() const { return series().select(visible_indices()); }
};

}  // namespace latseg
