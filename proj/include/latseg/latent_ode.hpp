#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latseg/adamax.hpp"
#include "latseg/autodiff.hpp"
#include "latseg/error.hpp"
#include "latseg/layers.hpp"
#include "latseg/ode.hpp"
#include "latseg/rng.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

/// Architecture and likelihood settings of a latent ODE model.
struct ModelConfig {
  std::size_t data_dim = 1;
  std::size_t latent_dim = 5;
  std::size_t hidden_dim = 10;  // encoder hidden state, also the GRU width
  std::vector<std::size_t> encoder_field_hidden = {100, 100};
  std::vector<std::size_t> latent_field_hidden = {100, 100};
  std::vector<std::size_t> decoder_hidden = {100, 100};
  double obs_variance = 1.0;
  std::size_t encoder_substeps = 5;  // Euler steps per gap between observations
  SolverConfig latent_solver = SolverConfig::adaptive(1e-5, 1e-6);

  void validate() const {
    require(data_dim >= 1, "model: data_dim must be >= 1");
    require(latent_dim >= 1, "model: latent_dim must be >= 1");
    require(latent_dim < hidden_dim, "model: latent_dim must be smaller than hidden_dim");
    require(obs_variance > 0 && std::isfinite(obs_variance), "model: obs_variance must be positive");
    require(encoder_substeps >= 1, "model: encoder_substeps must be >= 1");
    latent_solver.validate();
  }

  static ModelConfig sine() { return ModelConfig{}; }

  static ModelConfig lotka_volterra() {
    ModelConfig c;
    c.data_dim = 2;
    c.latent_dim = 8;
    c.hidden_dim = 16;
    c.encoder_field_hidden = {100, 100, 100};
    c.latent_field_hidden = {100, 100, 100};
    c.obs_variance = 0.01;
    return c;
  }
};

struct LatentOdeModel {
  ModelConfig config;
  GruParams gru;
  MlpParams encoder_field;  // hidden -> hidden
  MlpParams head;           // hidden -> (mean, log std)
  MlpParams latent_field;   // latent -> latent
  MlpParams decoder;        // latent -> data

  static LatentOdeModel create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    LatentOdeModel m;
    m.config = cfg;
    const std::size_t H = cfg.hidden_dim, L = cfg.latent_dim, D = cfg.data_dim;
    m.gru = GruParams::create(D, H, rng);
    m.encoder_field = MlpParams::create(H, cfg.encoder_field_hidden, H, Activation::tanh, Activation::identity, rng);
    m.head = MlpParams::create(H, {}, 2 * L, Activation::identity, Activation::identity, rng);
    m.latent_field = MlpParams::create(L, cfg.latent_field_hidden, L, Activation::tanh, Activation::identity, rng);
    m.decoder = MlpParams::create(L, cfg.decoder_hidden, D, Activation::relu, Activation::identity, rng);
    return m;
  }

  /// Stable order shared by checkpoints, the optimizer and bound leaves.
  std::vector<NamedTensor> named_parameters() {
    std::vector<NamedTensor> out;
    const std::pair<const char*, Tensor*> gates[] = {{"w_z", &gru.w_z}, {"w_r", &gru.w_r}, {"w_n", &gru.w_n},
                                                     {"u_z", &gru.u_z}, {"u_r", &gru.u_r}, {"u_n", &gru.u_n},
                                                     {"b_z", &gru.b_z}, {"b_r", &gru.b_r}, {"b_n", &gru.b_n}};
    for (const auto& [n, t] : gates) out.push_back({std::string("encoder.gru.") + n, t});
    auto add_mlp = [&out](const std::string& prefix, MlpParams& p) {
      for (std::size_t i = 0; i < p.depth(); ++i) {
        out.push_back({prefix + "." + std::to_string(i) + ".weight", &p.weights[i]});
        out.push_back({prefix + "." + std::to_string(i) + ".bias", &p.biases[i]});
      }
    };
    add_mlp("encoder.field", encoder_field);
    add_mlp("encoder.head", head);
    add_mlp("latent.field", latent_field);
    add_mlp("decoder", decoder);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = gru.w_z.size() + gru.w_r.size() + gru.w_n.size() + gru.u_z.size() + gru.u_r.size() +
                    gru.u_n.size() + gru.b_z.size() + gru.b_r.size() + gru.b_n.size();
    for (const MlpParams* p : {&encoder_field, &head, &latent_field, &decoder}) {
      for (std::size_t i = 0; i < p->depth(); ++i) n += p->weights[i].size() + p->biases[i].size();
    }
    return n;
  }
};

/// Parameters bound to a tape (or to nullptr for constant evaluation).
struct BoundModel {
  const ModelConfig* config = nullptr;
  GruVars gru;
  MlpVars encoder_field, head, latent_field, decoder;
  std::vector<Var> leaves;  // same order as named_parameters()
};

inline BoundModel bind(const LatentOdeModel& m, Tape* tape) {
  BoundModel b;
  b.config = &m.config;
  b.gru = bind(m.gru, tape);
  b.encoder_field = bind(m.encoder_field, tape);
  b.head = bind(m.head, tape);
  b.latent_field = bind(m.latent_field, tape);
  b.decoder = bind(m.decoder, tape);
  b.leaves = {b.gru.w_z, b.gru.w_r, b.gru.w_n, b.gru.u_z, b.gru.u_r, b.gru.u_n, b.gru.b_z, b.gru.b_r, b.gru.b_n};
  for (const MlpVars* p : {&b.encoder_field, &b.head, &b.latent_field, &b.decoder}) {
    for (std::size_t i = 0; i < p->weights.size(); ++i) {
      b.leaves.push_back(p->weights[i]);
      b.leaves.push_back(p->biases[i]);
    }
  }
  return b;
}

struct Posterior {
  Tensor mean;  // (L)
  Tensor std;   // (L), entries > 0
};

struct PosteriorVars {
  Var mean;     // (1 x L)
  Var log_std;  // (1 x L), before the floor
  Var std;      // (1 x L)
};

inline constexpr double min_posterior_std = 1e-6;

namespace detail {

inline void check_observations(const Tensor& values, std::span<const double> times, std::size_t data_dim) {
  require(!times.empty(), "need at least one observation");
  require(values.rows() == times.size(), "values/times length mismatch");
  require(values.cols() == data_dim, "data dimension " + std::to_string(values.cols()) + " does not match model (" +
                                         std::to_string(data_dim) + ")");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InvalidArgument("observation times must be strictly increasing");
  }
}

inline Var row_constant(const Tensor& values, std::size_t r) {
  std::vector<double> row(values.data().begin() + static_cast<std::ptrdiff_t>(r * values.cols()),
                          values.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * values.cols()));
  return Var(Tensor::matrix(1, values.cols(), std::move(row)));
}

}  // namespace detail

/// GRU-ODE encoder over observations in reverse time order.
inline PosteriorVars encode(const BoundModel& m, const Tensor& values, std::span<const double> times) {
  const ModelConfig& cfg = *m.config;
  detail::check_observations(values, times, cfg.data_dim);
  Var h(Tensor::matrix(1, cfg.hidden_dim));
  const std::size_t n = times.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = n - 1 - k;
    if (k > 0) {
      const double dt = -(times[i + 1] - times[i]) / static_cast<double>(cfg.encoder_substeps);
      for (std::size_t s = 0; s < cfg.encoder_substeps; ++s) {
        const Var f = mlp_forward(m.encoder_field, h);
        h = ad::linear_combination(h, std::span<const Var>(&f, 1), std::span<const double>(&dt, 1));
      }
    }
    h = gru_cell_step(m.gru, h, detail::row_constant(values, i));
  }
  const Var out = mlp_forward(m.head, h);
  const std::size_t L = cfg.latent_dim;
  PosteriorVars p;
  p.mean = ad::slice_cols(out, 0, L);
  p.log_std = ad::slice_cols(out, L, 2 * L);
  p.std = ad::clamp_min(ad::exp(p.log_std), min_posterior_std);
  return p;
}

inline Posterior encode(const LatentOdeModel& model, const Tensor& values, std::span<const double> times) {
  const PosteriorVars p = encode(bind(model, nullptr), values, times);
  const std::size_t L = model.config.latent_dim;
  return Posterior{p.mean.value().reshaped({L}), p.std.value().reshaped({L})};
}

/// Latent states at `queries` for z0 given at time t0. Rows of z0 are
/// independent samples; queries earlier than t0 are solved backwards.
inline std::vector<Var> latent_states(const BoundModel& m, const Var& z0, double t0, std::span<const double> queries,
                                      const SolverConfig& solver) {
  for (std::size_t i = 1; i < queries.size(); ++i) {
    if (!(queries[i] > queries[i - 1])) throw InvalidArgument("decode: query times must be strictly increasing");
  }
  const OdeField forward = [&m](double, const Var& z) { return mlp_forward(m.latent_field, z); };
  const OdeField reverse = [&m](double, const Var& z) { return ad::neg(mlp_forward(m.latent_field, z)); };
  const auto split = static_cast<std::size_t>(std::lower_bound(queries.begin(), queries.end(), t0) - queries.begin());
  std::vector<Var> out(queries.size(), z0);

  if (split > 0) {
    std::vector<double> s = {-t0};
    for (std::size_t i = split; i-- > 0;) s.push_back(-queries[i]);
    const OdeSolution sol = ode_solve(reverse, z0, s, solver);
    for (std::size_t k = 1; k < s.size(); ++k) out[split - k] = sol.states[k];
  }
  if (split < queries.size()) {
    std::vector<double> s = {t0};
    const std::size_t first = queries[split] == t0 ? split + 1 : split;
    for (std::size_t i = first; i < queries.size(); ++i) s.push_back(queries[i]);
    if (s.size() > 1) {
      const OdeSolution sol = ode_solve(forward, z0, s, solver);
      for (std::size_t i = first; i < queries.size(); ++i) out[i] = sol.states[i - first + 1];
    }
  }
  return out;
}

/// Decoded means, time-major: row t * S + s for sample s of z0 (S x L).
inline Var decode(const BoundModel& m, const Var& z0, double t0, std::span<const double> queries,
                  const SolverConfig& solver) {
  require(z0.cols() == m.config->latent_dim, "decode: z0 width does not match latent_dim");
  require(!queries.empty(), "decode: need at least one query time");
  const std::vector<Var> states = latent_states(m, z0, t0, queries, solver);
  return mlp_forward(m.decoder, states.size() == 1 ? states[0] : ad::concat_rows(states));
}

/// Predicted means (T x D) with z0 placed at times[0].
inline Tensor decode(const LatentOdeModel& model, const Tensor& z0, std::span<const double> times,
                     const SolverConfig& solver) {
  require(!times.empty(), "decode: need at least one time");
  const Var z(z0.reshaped({1, z0.size()}));
  return decode(bind(model, nullptr), z, times.front(), times, solver).value();
}

inline Tensor decode(const LatentOdeModel& model, const Tensor& z0, std::span<const double> times) {
  return decode(model, z0, times, model.config.latent_solver);
}

/// Predicted means (Q x D) for z0 placed at t0; queries may precede t0.
inline Tensor decode_at(const LatentOdeModel& model, const Tensor& z0, double t0, std::span<const double> queries) {
  const Var z(z0.reshaped({1, z0.size()}));
  return decode(bind(model, nullptr), z, t0, queries, model.config.latent_solver).value();
}

/// Σ 0.5 (μ² + σ² − 1 − log σ²) against N(0, I).
inline Var kl_to_standard_normal(const PosteriorVars& q) {
  const Var var = ad::square(q.std);
  return ad::scale(ad::sum(ad::add_scalar(ad::square(q.mean) + var - ad::log(var), -1.0)), 0.5);
}

inline double kl_to_standard_normal(const Posterior& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double v = q.std[i] * q.std[i];
    kl += 0.5 * (q.mean[i] * q.mean[i] + v - 1.0 - std::log(v));
  }
  return kl;
}

struct ElboTerms {
  Var elbo;
  Var reconstruction;  // mean over samples of log p(X | z0)
  Var kl;
};

/// Reparameterized ELBO averaged over `samples` draws of z0.
inline ElboTerms elbo_terms(const BoundModel& m, const Tensor& values, std::span<const double> times, double kl_weight,
                            Rng& rng, std::size_t samples = 1) {
  require(samples >= 1, "elbo: need at least one sample");
  require(kl_weight >= 0.0, "elbo: kl_weight must be non-negative");
  const ModelConfig& cfg = *m.config;
  const PosteriorVars q = encode(m, values, times);
  const std::size_t L = cfg.latent_dim, S = samples, T = times.size(), D = cfg.data_dim;

  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor eps = Tensor::matrix(S, L);
  for (double& e : eps.storage()) e = normal(rng);
  const Var z0 = q.mean + q.std * Var(std::move(eps));

  const Var pred = decode(m, z0, times.front(), times, cfg.latent_solver);
  Tensor target = Tensor::matrix(T * S, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t d = 0; d < D; ++d) target.at(t * S + s, d) = values.at(t, d);

  const double var = cfg.obs_variance;
  const double log_norm = -0.5 * static_cast<double>(T * D) * std::log(2.0 * std::numbers::pi * var);
  const Var sq = ad::sum(ad::square(pred - Var(std::move(target))));
  ElboTerms out;
  out.reconstruction = ad::add_scalar(ad::scale(sq, -0.5 / (var * static_cast<double>(S))), log_norm);
  out.kl = kl_to_standard_normal(q);
  out.elbo = out.reconstruction - ad::scale(out.kl, kl_weight);
  return out;
}

inline double elbo(const LatentOdeModel& model, const Tensor& values, std::span<const double> times, double kl_weight,
                   Rng& rng, std::size_t samples = 1) {
  return elbo_terms(bind(model, nullptr), values, times, kl_weight, rng, samples).elbo.value()[0];
}

struct MarginalLikelihoodConfig {
  std::size_t samples = 100;
  double obs_variance = 0.0;  // 0 uses the model's; otherwise must match it
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const {
    require(samples >= 1, "marginal likelihood: samples must be >= 1");
    if (obs_variance != 0.0) {
      require(obs_variance == model.obs_variance, "marginal likelihood: obs_variance differs from the model's");
    }
  }
};

struct MarginalEstimate {
  double log_likelihood = 0.0;
  double standard_error = 0.0;  // of the log estimate, delta method
  std::vector<double> log_weights;
};

inline double log_sum_exp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

/// Importance-sampled log p(X) with the posterior as proposal.
inline MarginalEstimate marginal_log_likelihood(const LatentOdeModel& model, const Tensor& values,
                                                std::span<const double> times, const MarginalLikelihoodConfig& cfg) {
  cfg.validate(model.config);
  const BoundModel m = bind(model, nullptr);
  const PosteriorVars q = encode(m, values, times);
  const std::size_t L = model.config.latent_dim, M = cfg.samples, T = times.size(), D = model.config.data_dim;
  const Tensor& mu = q.mean.value();
  const Tensor& sd = q.std.value();

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z = Tensor::matrix(M, L);
  std::vector<double> log_ratio(M, 0.0);  // log N(z|0,I) - log q(z)
  for (std::size_t j = 0; j < M; ++j) {
    double lr = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double e = normal(rng);
      const double zl = mu[l] + sd[l] * e;
      z.at(j, l) = zl;
      lr += -0.5 * zl * zl + 0.5 * e * e + std::log(sd[l]);
    }
    log_ratio[j] = lr;
  }

  const Tensor pred = decode(m, Var(std::move(z)), times.front(), times, model.config.latent_solver).value();
  const double var = model.config.obs_variance;
  const double log_norm = -0.5 * static_cast<double>(T * D) * std::log(2.0 * std::numbers::pi * var);
  MarginalEstimate est;
  est.log_weights.resize(M);
  for (std::size_t j = 0; j < M; ++j) {
    double sq = 0.0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const double r = values.at(t, d) - pred.at(t * M + j, d);
        sq += r * r;
      }
    est.log_weights[j] = log_norm - 0.5 * sq / var + log_ratio[j];
  }
  const double lse = log_sum_exp(est.log_weights);
  if (!std::isfinite(lse)) throw NumericalError("marginal likelihood: non-finite importance weights");
  est.log_likelihood = lse - std::log(static_cast<double>(M));

  if (M > 1) {
    const double mx = *std::max_element(est.log_weights.begin(), est.log_weights.end());
    double mean = 0.0, m2 = 0.0;
    for (double lw : est.log_weights) mean += std::exp(lw - mx);
    mean /= static_cast<double>(M);
    for (double lw : est.log_weights) m2 += (std::exp(lw - mx) - mean) * (std::exp(lw - mx) - mean);
    const double sdev = std::sqrt(m2 / static_cast<double>(M - 1));
    est.standard_error = sdev / (std::sqrt(static_cast<double>(M)) * mean);
  }
  return est;
}

}  // namespace latseg
