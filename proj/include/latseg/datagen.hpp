#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/ode.hpp"
#include "latseg/parallel.hpp"
#include "latseg/rng.hpp"
#include "latseg/tensor.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  void validate(const char* what) const {
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo <= hi))
      throw InvalidArgument(std::string(what) + ": range must satisfy lo <= hi");
  }
  double sample(Rng& rng) const { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct CountRange {
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive

  void validate(const char* what) const {
    if (lo > hi) throw InvalidArgument(std::string(what) + ": range must satisfy lo <= hi");
  }
  std::size_t sample(Rng& rng) const { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
};

/// Sine-wave hybrid trajectories: each segment is A·sin(ω·t_local + φ).
struct SineSpec {
  Range amplitude{-8.0, 8.0};
  Range frequency{2.0, 4.0};
  Range duration{3.0, 5.0};
  CountRange observations{50, 150};
  CountRange total_observations{0, 0};  // hi > 0: per-trajectory count, spread uniformly over all segments
  CountRange changepoints{0, 2};
  double min_amplitude_change = 2.5;
  double noise_sd = 0.025;
  bool aligned = false;  // share observation-time patterns across the dataset

  void validate() const {
    amplitude.validate("sine amplitude");
    frequency.validate("sine frequency");
    duration.validate("sine duration");
    observations.validate("sine observations");
    total_observations.validate("sine total_observations");
    changepoints.validate("sine changepoints");
    require(duration.lo > 0, "sine duration must be positive");
    require(observations.lo >= 1, "sine segments need at least one observation");
    require(total_observations.hi == 0 || total_observations.lo >= changepoints.hi + 1,
            "sine total_observations must leave at least one observation per segment");
    require(noise_sd >= 0 && std::isfinite(noise_sd), "sine noise_sd must be >= 0");
    require(min_amplitude_change >= 0, "sine min_amplitude_change must be >= 0");
  }
};

enum class LvVariant { jump, switching };

inline std::string to_string(LvVariant v) { return v == LvVariant::jump ? "JD" : "SD"; }

inline LvVariant lv_variant_from_string(const std::string& s) {
  if (s == "JD" || s == "jd") return LvVariant::jump;
  if (s == "SD" || s == "sd") return LvVariant::switching;
  throw InvalidArgument("unknown Lotka-Volterra variant '" + s + "' (expected JD or SD)");
}

/// Lotka-Volterra hybrid trajectories:
/// dx/dt = αx − βxy, dy/dt = δxy − γy.
struct LvSpec {
  Range alpha{0.5, 1.5};
  Range beta{0.5, 1.5};
  Range delta{1.5, 2.5};
  Range gamma{0.5, 1.5};
  Range x0{1.5, 2.5};
  Range y0{0.5, 1.5};
  CountRange observations{175, 225};
  Range end_time{14.0, 16.0};
  CountRange changepoints{0, 2};
  double min_coefficient_change = 0.6;
  double noise_sd = 0.01;
  LvVariant variant = LvVariant::jump;
  bool aligned = false;
  std::size_t max_retries = 10;
  double tolerance = 1e-8;

  void validate() const {
    for (const auto& [r, name] : {std::pair{alpha, "lv alpha"}, std::pair{beta, "lv beta"}, std::pair{delta, "lv delta"},
                                  std::pair{gamma, "lv gamma"}}) {
      r.validate(name);
      require(r.lo >= 0, std::string(name) + " must be non-negative");
    }
    x0.validate("lv x0");
    y0.validate("lv y0");
    require(x0.lo > 0 && y0.lo > 0, "lv initial populations must be positive");
    observations.validate("lv observations");
    require(observations.lo >= 1, "lv segments need at least one observation");
    end_time.validate("lv end_time");
    require(end_time.lo > 0, "lv end_time must be positive");
    changepoints.validate("lv changepoints");
    require(noise_sd >= 0 && std::isfinite(noise_sd), "lv noise_sd must be >= 0");
    require(min_coefficient_change >= 0, "lv min_coefficient_change must be >= 0");
    require(tolerance > 0, "lv tolerance must be positive");
  }
};

namespace detail {

inline constexpr std::uint64_t align_tag = 0xa11a;
inline constexpr std::size_t max_rejections = 10000;

/// Sorted observation times in (0, duration). With `aligned`, positions depend
/// only on (dataset seed, count), so equal-sized segments share a pattern.
inline std::vector<double> observation_times(std::size_t count, double duration, bool aligned,
                                             std::uint64_t dataset_seed, Rng& rng) {
  Rng shared(derive_seed(dataset_seed, {align_tag, count}));
  Rng& src = aligned ? shared : rng;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t attempt = 0; attempt < max_rejections; ++attempt) {
    std::vector<double> t(count);
    for (double& x : t) x = u(src) * duration;
    std::sort(t.begin(), t.end());
    bool ok = t.front() > 0.0;
    for (std::size_t i = 1; i < t.size() && ok; ++i) ok = t[i] > t[i - 1];
    if (ok) return t;
  }
  throw NumericalError("observation_times: could not draw distinct times");
}

template <class Draw, class Accept>
auto draw_until(Draw draw, Accept accept, const char* what) {
  for (std::size_t attempt = 0; attempt < max_rejections; ++attempt) {
    auto v = draw();
    if (accept(v)) return v;
  }
  throw InvalidArgument(std::string(what) + ": no admissible draw; ranges are too narrow for the minimum change");
}

inline void add_noise(Tensor& values, double sd, Rng& rng) {
  if (sd == 0.0) return;
  std::normal_distribution<double> g(0.0, sd);
  for (double& v : values.storage()) v += g(rng);
}

inline Trajectory assemble(const std::vector<std::vector<double>>& seg_times, const std::vector<std::vector<double>>& seg_values,
                           std::size_t dim) {
  Trajectory tr;
  std::vector<double> flat;
  for (std::size_t s = 0; s < seg_times.size(); ++s) {
    tr.times.insert(tr.times.end(), seg_times[s].begin(), seg_times[s].end());
    flat.insert(flat.end(), seg_values[s].begin(), seg_values[s].end());
    if (s + 1 < seg_times.size()) tr.changepoints.push_back(tr.times.size() - 1);
  }
  tr.values = Tensor::matrix(tr.times.size(), dim, std::move(flat));
  tr.mask.assign(tr.times.size(), MaskClass::visible);
  return tr;
}

}  // namespace detail

/// One sine trajectory from its own seed; `dataset_seed` only feeds aligned times.
inline Trajectory gen_sine_one(const SineSpec& spec, std::uint64_t seed, std::uint64_t dataset_seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t segments = spec.changepoints.sample(rng) + 1;
  std::vector<std::vector<double>> times, values;
  std::vector<std::map<std::string, double>> params;
  double offset = 0.0;
  double prev_amp = NAN;
  const bool per_trajectory = spec.total_observations.hi > 0;
  std::vector<double> amps, freqs, phases, starts;
  for (std::size_t s = 0; s < segments; ++s) {
    const double amp = detail::draw_until(
        [&] { return spec.amplitude.sample(rng); },
        [&](double a) { return s == 0 || std::abs(a - prev_amp) >= spec.min_amplitude_change; }, "gen_sine");
    const double freq = spec.frequency.sample(rng);
    const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    const double duration = spec.duration.sample(rng);
    std::vector<double> t;
    if (!per_trajectory) {
      t = detail::observation_times(spec.observations.sample(rng), duration, spec.aligned, dataset_seed, rng);
      for (double& x : t) x += offset;
    }
    times.push_back(std::move(t));
    params.push_back({{"amplitude", amp}, {"frequency", freq}, {"phase", phase}, {"duration", duration}, {"start", offset}});
    amps.push_back(amp);
    freqs.push_back(freq);
    phases.push_back(phase);
    starts.push_back(offset);
    offset += duration;
    prev_amp = amp;
  }
  if (per_trajectory) {
    const std::size_t count = spec.total_observations.sample(rng);
    auto split = [&](const std::vector<double>& all) {
      std::vector<std::vector<double>> parts(segments);
      std::size_t s = 0;
      for (double x : all) {
        while (s + 1 < segments && x >= starts[s + 1]) ++s;
        parts[s].push_back(x);
      }
      return parts;
    };
    times = detail::draw_until(
        [&] { return split(detail::observation_times(count, offset, spec.aligned, dataset_seed, rng)); },
        [](const std::vector<std::vector<double>>& parts) {
          return std::all_of(parts.begin(), parts.end(), [](const auto& p) { return !p.empty(); });
        },
        "gen_sine");
  }
  for (std::size_t s = 0; s < segments; ++s) {
    std::vector<double> v(times[s].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = amps[s] * std::sin(freqs[s] * (times[s][i] - starts[s]) + phases[s]);
    values.push_back(std::move(v));
  }
  Trajectory tr = detail::assemble(times, values, 1);
  detail::add_noise(tr.values, spec.noise_sd, rng);
  tr.segment_params = std::move(params);
  tr.validate();
  return tr;
}

/// `count` trajectories; trajectory i uses seed derive_seed(seed, {i}).
inline std::vector<Trajectory> gen_sine(const SineSpec& spec, std::size_t count, std::uint64_t seed, std::size_t threads = 1) {
  require(count >= 1, "gen_sine: count must be >= 1");
  spec.validate();
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = gen_sine_one(spec, derive_seed(seed, {i}), seed); });
  return out;
}

struct LvCoefficients {
  double alpha = 0, beta = 0, delta = 0, gamma = 0;

  double distance(const LvCoefficients& o) const {
    return std::sqrt((alpha - o.alpha) * (alpha - o.alpha) + (beta - o.beta) * (beta - o.beta) +
                     (delta - o.delta) * (delta - o.delta) + (gamma - o.gamma) * (gamma - o.gamma));
  }
};

inline Tensor lv_field(const LvCoefficients& c, const Tensor& y) {
  const double x = y[0], p = y[1];
  return Tensor::vector({c.alpha * x - c.beta * x * p, c.delta * x * p - c.gamma * p});
}

/// δx − γ ln x + βy − α ln y, constant along exact trajectories.
inline double lv_invariant(const LvCoefficients& c, double x, double y) {
  return c.delta * x - c.gamma * std::log(x) + c.beta * y - c.alpha * std::log(y);
}

/// Populations at `times` (strictly increasing, times[0] = start of the
/// segment) from (x0, y0) at times[0].
inline std::vector<Tensor> lv_solve(const LvCoefficients& c, double x0, double y0, std::span<const double> times,
                                    double tolerance) {
  SolverConfig cfg = SolverConfig::adaptive(tolerance, tolerance);
  cfg.max_steps = 200000;
  return ode_solve_values([&c](double, const Tensor& y) { return lv_field(c, y); }, Tensor::vector({x0, y0}), times, cfg);
}

inline Trajectory gen_lv_one(const LvSpec& spec, std::uint64_t seed, std::uint64_t dataset_seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t segments = spec.changepoints.sample(rng) + 1;
  std::vector<std::vector<double>> times, values;
  std::vector<std::map<std::string, double>> params;
  double offset = 0.0;
  LvCoefficients prev;
  double carry_x = spec.x0.sample(rng), carry_y = spec.y0.sample(rng);
  for (std::size_t s = 0; s < segments; ++s) {
    bool done = false;
    for (std::size_t attempt = 0; attempt <= spec.max_retries && !done; ++attempt) {
      const LvCoefficients c = detail::draw_until(
          [&] { return LvCoefficients{spec.alpha.sample(rng), spec.beta.sample(rng), spec.delta.sample(rng), spec.gamma.sample(rng)}; },
          [&](const LvCoefficients& k) { return s == 0 || k.distance(prev) >= spec.min_coefficient_change; }, "gen_lv");
      double x0 = carry_x, y0 = carry_y;
      if (spec.variant == LvVariant::jump && (s > 0 || attempt > 0)) {
        x0 = spec.x0.sample(rng);
        y0 = spec.y0.sample(rng);
      }
      const double end = spec.end_time.sample(rng);
      const std::size_t count = spec.observations.sample(rng);
      std::vector<double> local = detail::observation_times(count, end, spec.aligned, dataset_seed, rng);
      std::vector<double> query;
      query.reserve(count + 2);
      query.push_back(0.0);
      query.insert(query.end(), local.begin(), local.end());
      if (end > local.back()) query.push_back(end);
      std::vector<Tensor> states;
      try {
        states = lv_solve(c, x0, y0, query, spec.tolerance);
      } catch (const Error&) {
        continue;
      }
      bool positive = true;
      for (const Tensor& st : states) positive = positive && st.all_finite() && st[0] > 0 && st[1] > 0;
      if (!positive) continue;
      std::vector<double> t(count), v(2 * count);
      for (std::size_t i = 0; i < count; ++i) {
        t[i] = offset + local[i];
        v[2 * i] = states[i + 1][0];
        v[2 * i + 1] = states[i + 1][1];
      }
      times.push_back(std::move(t));
      values.push_back(std::move(v));
      params.push_back({{"alpha", c.alpha}, {"beta", c.beta}, {"delta", c.delta}, {"gamma", c.gamma},
                        {"x0", x0}, {"y0", y0}, {"end_time", end}, {"start", offset}});
      carry_x = states.back()[0];
      carry_y = states.back()[1];
      offset += end;
      prev = c;
      done = true;
    }
    if (!done) throw NumericalError("gen_lv: segment " + std::to_string(s) + " failed after " +
                                    std::to_string(spec.max_retries) + " retries");
  }
  Trajectory tr = detail::assemble(times, values, 2);
  detail::add_noise(tr.values, spec.noise_sd, rng);
  tr.segment_params = std::move(params);
  tr.validate();
  return tr;
}

inline std::vector<Trajectory> gen_lv(const LvSpec& spec, std::size_t count, std::uint64_t seed, std::size_t threads = 1) {
  require(count >= 1, "gen_lv: count must be >= 1");
  spec.validate();
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = gen_lv_one(spec, derive_seed(seed, {i}), seed); });
  return out;
}

// ---------------------------------------------------------------- masking

struct MaskSpec {
  double extrapolation_fraction = 0.2;   // trailing share of all points
  double interpolation_fraction = 0.25;  // share of the remaining points
  bool shared = true;                    // same interior pattern for every trajectory

  void validate() const {
    require(extrapolation_fraction >= 0 && extrapolation_fraction < 1, "mask extrapolation_fraction must be in [0, 1)");
    require(interpolation_fraction >= 0 && interpolation_fraction < 1, "mask interpolation_fraction must be in [0, 1)");
  }
};

/// Marks the trailing points as extrapolation-heldout and a random subset of
/// the rest as interpolation-heldout. Counts are rounded to nearest.
inline Trajectory apply_masking(Trajectory tr, std::uint64_t seed, const MaskSpec& spec = {}) {
  spec.validate();
  const std::size_t n = tr.size();
  require(n >= 10, "apply_masking: need at least 10 observations");
  const auto n_extrap = static_cast<std::size_t>(std::llround(spec.extrapolation_fraction * static_cast<double>(n)));
  const std::size_t rest = n - n_extrap;
  const auto n_interp = static_cast<std::size_t>(std::llround(spec.interpolation_fraction * static_cast<double>(rest)));
  tr.mask.assign(n, MaskClass::visible);
  for (std::size_t i = rest; i < n; ++i) tr.mask[i] = MaskClass::extrap_heldout;
  std::vector<std::size_t> idx(rest);
  for (std::size_t i = 0; i < rest; ++i) idx[i] = i;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < n_interp; ++k) tr.mask[idx[k]] = MaskClass::interp_heldout;
  return tr;
}

/// Dataset-level masking: one seed for all trajectories when shared,
/// otherwise derive_seed(seed, {i}) per trajectory.
inline void apply_masking(std::vector<Trajectory>& data, std::uint64_t seed, const MaskSpec& spec = {}) {
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = apply_masking(std::move(data[i]), spec.shared ? seed : derive_seed(seed, {i}), spec);
}

// ---------------------------------------------------------------- segments

/// Splits a labelled trajectory at its changepoints.
inline std::vector<Trajectory> extract_sdfs(const Trajectory& tr) {
  tr.validate();
  std::vector<Trajectory> out;
  std::size_t k = 0;
  for (const auto& [s, e] : Segmentation{tr.changepoints}.segments(tr.size())) {
    const Series part = tr.series().slice(s, e);
    Trajectory seg;
    seg.times = part.times;
    seg.values = part.values;
    seg.mask.assign(tr.mask.begin() + static_cast<std::ptrdiff_t>(s), tr.mask.begin() + static_cast<std::ptrdiff_t>(e) + 1);
    if (k < tr.segment_params.size()) seg.segment_params.push_back(tr.segment_params[k]);
    out.push_back(std::move(seg));
    ++k;
  }
  return out;
}

/// Segments of every trajectory as series; with `visible_only`, held-out
/// points are dropped and segments left with fewer than `min_points` skipped.
inline std::vector<Series> sdf_series(const std::vector<Trajectory>& data, bool visible_only, std::size_t min_points = 1) {
  std::vector<Series> out;
  for (const Trajectory& tr : data) {
    for (const Trajectory& seg : extract_sdfs(tr)) {
      const std::vector<std::size_t> keep = visible_only ? seg.visible_indices() : [&] {
        std::vector<std::size_t> all(seg.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
      }();
      if (keep.size() < std::max<std::size_t>(min_points, 1)) continue;
      out.push_back(seg.series().select(keep));
    }
  }
  return out;
}

}  // namespace latseg
