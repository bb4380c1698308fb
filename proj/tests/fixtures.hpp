#pragma once

// Small models shared by the test suites.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "latseg/latent_ode.hpp"

namespace latseg::testing {

inline ModelConfig small_config() {
  ModelConfig c;
  c.data_dim = 2;
  c.latent_dim = 2;
  c.hidden_dim = 3;
  c.encoder_field_hidden = {4};
  c.latent_field_hidden = {4};
  c.decoder_hidden = {4};
  c.obs_variance = 0.3;
  c.latent_solver = SolverConfig::fixed(OdeMethod::rk4, 0.05);
  return c;
}

inline void zero_mlp(MlpParams& p) {
  for (Tensor& w : p.weights) w.fill(0.0);
  for (Tensor& b : p.biases) b.fill(0.0);
}

// One-dimensional latent, identity decoder, zero latent field, posterior set
// through the head bias: p(x) = N(x | 0, var + 1) in closed form.
inline LatentOdeModel linear_gaussian_toy(double obs_variance, double q_mean, double q_std) {
  ModelConfig c;
  c.data_dim = 1;
  c.latent_dim = 1;
  c.hidden_dim = 2;
  c.encoder_field_hidden = {};
  c.latent_field_hidden = {};
  c.decoder_hidden = {};
  c.obs_variance = obs_variance;
  LatentOdeModel m = LatentOdeModel::create(c, 1);
  zero_mlp(m.latent_field);
  zero_mlp(m.head);
  m.head.biases[0] = Tensor::vector({q_mean, std::log(q_std)});
  m.decoder.weights[0] = Tensor::matrix({{1.0}});
  m.decoder.biases[0] = Tensor::vector({0.0});
  return m;
}

inline double log_normal(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

/// Exact log evidence of iid observations of a constant latent under the toy:
/// x ~ N(0, var·I + 1·1ᵀ).
inline double toy_log_evidence(const std::vector<double>& x, double var) {
  const double n = static_cast<double>(x.size());
  double sum = 0.0, sq = 0.0;
  for (double v : x) {
    sum += v;
    sq += v * v;
  }
  const double log_det = (n - 1.0) * std::log(var) + std::log(var + n);
  const double quad = (sq - sum * sum / (var + n)) / var;
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

inline Tensor sample_values(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Tensor v = Tensor::matrix(n, d);
  for (double& x : v.storage()) x = u(rng);
  return v;
}

// Rebuilds a BoundModel over caller-supplied leaves in named_parameters() order.
inline BoundModel bind_leaves(const LatentOdeModel& shape, std::span<const Var> leaves) {
  BoundModel b = bind(shape, nullptr);
  std::size_t k = 0;
  for (Var* v : {&b.gru.w_z, &b.gru.w_r, &b.gru.w_n, &b.gru.u_z, &b.gru.u_r, &b.gru.u_n, &b.gru.b_z, &b.gru.b_r,
                 &b.gru.b_n}) {
    *v = leaves[k++];
  }
  for (MlpVars* p : {&b.encoder_field, &b.head, &b.latent_field, &b.decoder}) {
    for (std::size_t i = 0; i < p->weights.size(); ++i) {
      p->weights[i] = leaves[k++];
      p->biases[i] = leaves[k++];
    }
  }
  b.leaves.assign(leaves.begin(), leaves.end());
  return b;
}

inline std::vector<Tensor> parameter_values(LatentOdeModel& m) {
  std::vector<Tensor> out;
  for (const NamedTensor& p : m.named_parameters()) out.push_back(*p.tensor);
  return out;
}

}  // namespace latseg::testing
