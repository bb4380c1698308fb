#pragma once

// Explicit ODE integration over autodiff values: fixed-step Euler and RK4 and
// adaptive Dormand-Prince 5(4) with the 4th-order continuous extension for
// query times that fall inside a step.
//
// Solver steps are recorded on the tape when the state is tracked, so
// gradients of the returned states are exact derivatives of the computed
// discrete solution. Step-size control reads plain values only.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latseg/autodiff.hpp"
#include "latseg/error.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

enum class OdeMethod { euler, rk4, dopri5 };

inline std::string to_string(OdeMethod m) {
  switch (m) {
    case OdeMethod::euler: return "euler";
    case OdeMethod::rk4: return "rk4";
    default: return "dopri5";
  }
}

inline OdeMethod ode_method_from_string(const std::string& s) {
  if (s == "euler") return OdeMethod::euler;
  if (s == "rk4") return OdeMethod::rk4;
  if (s == "dopri5") return OdeMethod::dopri5;
  throw InvalidArgument("unknown ODE method '" + s + "'");
}

struct SolverConfig {
  OdeMethod method = OdeMethod::dopri5;
  double step = 0.01;  // euler / rk4 only
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 100000;
  double safety = 0.9;
  double min_scale = 0.2;
  double max_scale = 5.0;

  void validate() const {
    require(rtol > 0 && atol > 0, "solver tolerances must be positive");
    require(max_steps >= 1, "solver max_steps must be >= 1");
    if (method != OdeMethod::dopri5) require(step > 0, "fixed-step solver needs a positive step size");
    require(safety > 0 && min_scale > 0 && max_scale >= min_scale, "invalid step controller constants");
  }

  static SolverConfig fixed(OdeMethod m, double h) {
    SolverConfig c;
    c.method = m;
    c.step = h;
    return c;
  }

  static SolverConfig adaptive(double rtol, double atol) {
    SolverConfig c;
    c.method = OdeMethod::dopri5;
    c.rtol = rtol;
    c.atol = atol;
    return c;
  }
};

using OdeField = std::function<Var(double t, const Var& y)>;

struct OdeSolution {
  std::vector<double> times;
  std::vector<Var> states;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t evaluations = 0;
};

namespace dopri5_tableau {
inline constexpr std::array<double, 7> c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr double a21 = 1.0 / 5;
inline constexpr std::array<double, 2> a3 = {3.0 / 40, 9.0 / 40};
inline constexpr std::array<double, 3> a4 = {44.0 / 45, -56.0 / 15, 32.0 / 9};
inline constexpr std::array<double, 4> a5 = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729};
inline constexpr std::array<double, 5> a6 = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656};
// 5th-order weights (also the last stage row; FSAL).
inline constexpr std::array<double, 6> b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84};
// 5th minus 4th order weights.
inline constexpr std::array<double, 7> e = {71.0 / 57600,  0.0,         -71.0 / 16695, 71.0 / 1920,
                                            -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
// Continuous extension (Hairer's contd5 coefficients).
inline constexpr std::array<double, 7> d = {-12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
                                            -10690763975.0 / 1880347072.0,  701980252875.0 / 199316789632.0,
                                            -1453857185.0 / 822651844.0,    69997945.0 / 29380423.0};
}  // namespace dopri5_tableau

struct Dopri5Step {
  Var proposed;
  Tensor error;          // h * sum(e_i k_i)
  double error_norm = 0;  // mixed rtol/atol RMS norm
  bool accepted = false;
  double next_step = 0;
  std::array<Var, 7> stages;  // k1..k7; k7 = f(t + h, proposed)
};

/// sqrt(mean((err_i / (atol + rtol * max(|y_i|, |y1_i|)))^2))
inline double mixed_error_norm(const Tensor& err, const Tensor& y, const Tensor& y1, double rtol, double atol) {
  double acc = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
    const double r = err[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

/// Step-size factor for a given weighted error norm.
inline double step_scale(double error_norm, const SolverConfig& cfg) {
  if (!std::isfinite(error_norm)) return cfg.min_scale;
  if (error_norm == 0.0) return cfg.max_scale;
  return std::clamp(cfg.safety * std::pow(error_norm, -0.2), cfg.min_scale, cfg.max_scale);
}

/// One Dormand-Prince attempt from (t, y) with step h. `k1`, when given, is
/// f(t, y) reused from the previous accepted step.
inline Dopri5Step dopri5_step(const OdeField& field, double t, const Var& y, double h, const SolverConfig& cfg,
                              const Var* k1 = nullptr, std::size_t* evaluations = nullptr) {
  require(h > 0, "dopri5_step: step must be positive");
  namespace T = dopri5_tableau;
  auto eval = [&](double tt, const Var& yy) {
    if (evaluations) ++*evaluations;
    Var out = field(tt, yy);
    if (!out.value().same_matrix_shape(y.value())) {
      throw InvalidArgument("ODE field returned shape " + out.value().shape_string() + " for state " +
                            y.value().shape_string());
    }
    return out;
  };
  Dopri5Step s;
  auto& k = s.stages;
  k[0] = k1 ? *k1 : eval(t, y);
  auto stage = [&](std::size_t n, const double* coeffs) {
    std::array<double, 6> cs{};
    for (std::size_t j = 0; j < n; ++j) cs[j] = h * coeffs[j];
    return ad::linear_combination(y, std::span<const Var>(k.data(), n), std::span<const double>(cs.data(), n));
  };
  const double a2[1] = {T::a21};
  k[1] = eval(t + T::c[1] * h, stage(1, a2));
  k[2] = eval(t + T::c[2] * h, stage(2, T::a3.data()));
  k[3] = eval(t + T::c[3] * h, stage(3, T::a4.data()));
  k[4] = eval(t + T::c[4] * h, stage(4, T::a5.data()));
  k[5] = eval(t + h, stage(5, T::a6.data()));
  s.proposed = stage(6, T::b.data());
  k[6] = eval(t + h, s.proposed);

  const Tensor& y0 = y.value();
  s.error = Tensor(y0.shape(), 0.0);
  for (std::size_t j = 0; j < 7; ++j) {
    if (T::e[j] == 0.0) continue;
    const Tensor& kj = k[j].value();
    for (std::size_t i = 0; i < y0.size(); ++i) s.error[i] += h * T::e[j] * kj[i];
  }
  s.error_norm = mixed_error_norm(s.error, y0, s.proposed.value(), cfg.rtol, cfg.atol);
  s.accepted = std::isfinite(s.error_norm) && s.proposed.value().all_finite() && s.error_norm <= 1.0;
  s.next_step = h * step_scale(s.error_norm, cfg);
  return s;
}

/// Continuous-extension value at t + theta * h inside an accepted step.
inline Var dopri5_dense(const Var& y0, const Dopri5Step& s, double h, double theta) {
  namespace T = dopri5_tableau;
  const double th = theta;
  const double th1 = 1.0 - theta;
  const double q = th * th * th1 * th1;  // weight of the d-row term
  // y(theta) = y0 + th*r2 + th*th1*r3 + th^2*th1*r4 + th^2*th1^2*r5 with
  //   r2 = y1 - y0, r3 = h k1 - r2, r4 = 2 r2 - h (k1 + k7), r5 = h sum d_i k_i
  const double w_r2 = th - th * th1 + 2.0 * th * th * th1;
  const std::array<Var, 7> terms = {s.proposed, s.stages[0], s.stages[2], s.stages[3],
                                    s.stages[4], s.stages[5], s.stages[6]};
  const std::array<double, 7> cs = {w_r2,
                                    h * (th * th1 - th * th * th1 + q * T::d[0]),
                                    h * q * T::d[2],
                                    h * q * T::d[3],
                                    h * q * T::d[4],
                                    h * q * T::d[5],
                                    h * (-th * th * th1 + q * T::d[6])};
  return ad::linear_combination(ad::scale(y0, 1.0 - w_r2), terms, cs);
}

namespace detail {

inline void check_query_times(std::span<const double> times) {
  require(!times.empty(), "ode_solve: need at least one query time");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InvalidArgument("ode_solve: query times must be strictly increasing");
  }
}

inline Var fixed_step(const OdeField& field, OdeMethod m, double t, const Var& y, double h, std::size_t& evals) {
  if (m == OdeMethod::euler) {
    ++evals;
    const Var k = field(t, y);
    return ad::linear_combination(y, std::span<const Var>(&k, 1), std::span<const double>(&h, 1));
  }
  evals += 4;
  const double hh = 0.5 * h;
  const Var k1 = field(t, y);
  const Var k2 = field(t + hh, ad::linear_combination(y, std::span<const Var>(&k1, 1), std::span<const double>(&hh, 1)));
  const Var k3 = field(t + hh, ad::linear_combination(y, std::span<const Var>(&k2, 1), std::span<const double>(&hh, 1)));
  const Var k4 = field(t + h, ad::linear_combination(y, std::span<const Var>(&k3, 1), std::span<const double>(&h, 1)));
  const std::array<Var, 4> ks = {k1, k2, k3, k4};
  const std::array<double, 4> cs = {h / 6, h / 3, h / 3, h / 6};
  return ad::linear_combination(y, ks, cs);
}

}  // namespace detail

/// Solves dy/dt = field(t, y) from y(times[0]) = y0 and reports y at every
/// query time. Fixed-step methods split each query gap into equal steps no
/// longer than cfg.step, so they land exactly on the query times.
inline OdeSolution ode_solve(const OdeField& field, const Var& y0, std::span<const double> times,
                             const SolverConfig& cfg) {
  cfg.validate();
  detail::check_query_times(times);
  OdeSolution sol;
  sol.times.assign(times.begin(), times.end());
  sol.states.reserve(times.size());
  sol.states.push_back(y0);
  if (times.size() == 1) return sol;

  if (cfg.method != OdeMethod::dopri5) {
    Var y = y0;
    for (std::size_t q = 1; q < times.size(); ++q) {
      const double span = times[q] - times[q - 1];
      const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / cfg.step - 1e-9)));
      const double h = span / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (sol.accepted_steps >= cfg.max_steps) {
          throw NonConvergence("ode_solve: exceeded max_steps", times[q - 1] + static_cast<double>(i) * h);
        }
        const double t = times[q - 1] + static_cast<double>(i) * h;
        y = detail::fixed_step(field, cfg.method, t, y, h, sol.evaluations);
        ++sol.accepted_steps;
      }
      if (!y.value().all_finite()) throw NumericalError("ode_solve: non-finite state at t=" + std::to_string(times[q]));
      sol.states.push_back(y);
    }
    return sol;
  }

  const double t_end = times.back();
  double t = times.front();
  double h = (t_end - t) / 100.0;
  Var y = y0;
  Var k1 = field(t, y);
  ++sol.evaluations;
  std::size_t next_q = 1;
  std::size_t bad_in_a_row = 0;
  while (next_q < times.size()) {
    if (sol.accepted_steps + sol.rejected_steps >= cfg.max_steps) {
      throw NonConvergence("ode_solve: exceeded max_steps (" + std::to_string(cfg.max_steps) + ")", t);
    }
    const bool last = t + h >= t_end;
    const double step = last ? t_end - t : h;
    if (!(step > 1e-14 * std::max(1.0, std::abs(t)))) {
      throw NumericalError("ode_solve: step size underflow at t=" + std::to_string(t));
    }
    Dopri5Step s = dopri5_step(field, t, y, step, cfg, &k1, &sol.evaluations);
    if (!s.accepted) {
      ++sol.rejected_steps;
      if (!std::isfinite(s.error_norm) || !s.proposed.value().all_finite()) {
        if (++bad_in_a_row > 20) throw NumericalError("ode_solve: non-finite state near t=" + std::to_string(t));
      }
      h = s.next_step;
      continue;
    }
    bad_in_a_row = 0;
    const double t_new = last ? t_end : t + step;
    while (next_q < times.size() && times[next_q] <= t_new) {
      if (times[next_q] == t_new) {
        sol.states.push_back(s.proposed);
      } else {
        sol.states.push_back(dopri5_dense(y, s, step, (times[next_q] - t) / step));
      }
      ++next_q;
    }
    ++sol.accepted_steps;
    t = t_new;
    y = s.proposed;
    k1 = s.stages[6];
    h = s.next_step;
  }
  return sol;
}

/// Plain-tensor convenience overload.
inline std::vector<Tensor> ode_solve_values(const std::function<Tensor(double, const Tensor&)>& field, const Tensor& y0,
                                            std::span<const double> times, const SolverConfig& cfg,
                                            OdeSolution* stats = nullptr) {
  OdeField f = [&field](double t, const Var& y) { return Var(field(t, y.value())); };
  OdeSolution sol = ode_solve(f, Var(y0), times, cfg);
  std::vector<Tensor> out;
  out.reserve(sol.states.size());
  for (const Var& v : sol.states) out.push_back(v.value().reshaped(y0.shape()));
  if (stats) *stats = sol;
  return out;
}

}  // namespace latseg
