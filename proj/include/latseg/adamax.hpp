#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// Adamax (infinity-norm Adam) state. Accumulators are allocated lazily on the
/// first step to mirror the parameter shapes.
struct AdamaxState {
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> inf_norm;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adamax update:
///   m <- b1 m + (1 - b1) g
///   u <- max(b2 u, |g| + eps)
///   p <- p - lr / (1 - b1^t) * m / u
inline void adamax_step(AdamaxState& state, std::span<const NamedTensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw InvalidArgument("adamax_step: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->same_matrix_shape(grads[i])) {
      throw InvalidArgument("adamax_step: gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) throw NumericalError("adamax_step: non-finite gradient for parameter " + params[i].name);
  }
  if (state.first_moment.empty()) {
    for (const NamedTensor& p : params) {
      state.first_moment.emplace_back(p.tensor->shape(), 0.0);
      state.inf_norm.emplace_back(p.tensor->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw InvalidArgument("adamax_step: state does not match parameter list");

  ++state.step;
  const double bias_correction = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double step_size = state.learning_rate / bias_correction;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    Tensor& m = state.first_moment[i];
    Tensor& u = state.inf_norm[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      u[k] = std::max(state.beta2 * u[k], std::abs(g[k]) + state.eps);
      p[k] -= step_size * m[k] / u[k];
    }
  }
}

/// Scales all gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  require(max_norm > 0.0, "clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads) sq += g.squared_norm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads) g *= s;
  }
  return norm;
}

}  // namespace latseg
