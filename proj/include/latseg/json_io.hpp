#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "latseg/datagen.hpp"
#include "latseg/error.hpp"
#include "latseg/latent_ode.hpp"
#include "latseg/ode.hpp"

namespace latseg {

using Json = nlohmann::json;

/// Throws InvalidArgument naming the first key of `j` outside `known`.
inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  require(j.is_object(), where + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw InvalidArgument(where + ": unknown key '" + k + "'");
  }
}

/// Reads j[key] into out when present, with a typed error on mismatch.
template <class T>
void read_optional(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(where + ": bad value for '" + key + "': " + e.what());
  }
}

inline Json to_json(const SolverConfig& c) {
  return Json{{"method", to_string(c.method)}, {"step", c.step},         {"rtol", c.rtol},
              {"atol", c.atol},                {"max_steps", c.max_steps}, {"safety", c.safety},
              {"min_scale", c.min_scale},      {"max_scale", c.max_scale}};
}

inline SolverConfig solver_from_json(const Json& j, SolverConfig c = {}) {
  const std::string where = "solver config";
  reject_unknown_keys(j, {"method", "step", "rtol", "atol", "max_steps", "safety", "min_scale", "max_scale"}, where);
  std::string method = to_string(c.method);
  read_optional(j, "method", method, where);
  c.method = ode_method_from_string(method);
  read_optional(j, "step", c.step, where);
  read_optional(j, "rtol", c.rtol, where);
  read_optional(j, "atol", c.atol, where);
  read_optional(j, "max_steps", c.max_steps, where);
  read_optional(j, "safety", c.safety, where);
  read_optional(j, "min_scale", c.min_scale, where);
  read_optional(j, "max_scale", c.max_scale, where);
  c.validate();
  return c;
}

inline Json to_json(const ModelConfig& c) {
  return Json{{"data_dim", c.data_dim},
              {"latent_dim", c.latent_dim},
              {"hidden_dim", c.hidden_dim},
              {"encoder_field_hidden", c.encoder_field_hidden},
              {"latent_field_hidden", c.latent_field_hidden},
              {"decoder_hidden", c.decoder_hidden},
              {"obs_variance", c.obs_variance},
              {"encoder_substeps", c.encoder_substeps},
              {"latent_solver", to_json(c.latent_solver)}};
}

/// Starts from `c` (a preset) and applies the keys present in `j`.
inline ModelConfig model_config_from_json(const Json& j, ModelConfig c = {}) {
  const std::string where = "model config";
  reject_unknown_keys(j,
                      {"preset", "data_dim", "latent_dim", "hidden_dim", "encoder_field_hidden", "latent_field_hidden",
                       "decoder_hidden", "obs_variance", "encoder_substeps", "latent_solver"},
                      where);
  if (auto it = j.find("preset"); it != j.end()) {
    const std::string p = it->get<std::string>();
    if (p == "sine") c = ModelConfig::sine();
    else if (p == "lotka_volterra") c = ModelConfig::lotka_volterra();
    else throw InvalidArgument(where + ": unknown preset '" + p + "'");
  }
  read_optional(j, "data_dim", c.data_dim, where);
  read_optional(j, "latent_dim", c.latent_dim, where);
  read_optional(j, "hidden_dim", c.hidden_dim, where);
  read_optional(j, "encoder_field_hidden", c.encoder_field_hidden, where);
  read_optional(j, "latent_field_hidden", c.latent_field_hidden, where);
  read_optional(j, "decoder_hidden", c.decoder_hidden, where);
  read_optional(j, "obs_variance", c.obs_variance, where);
  read_optional(j, "encoder_substeps", c.encoder_substeps, where);
  if (auto it = j.find("latent_solver"); it != j.end()) c.latent_solver = solver_from_json(*it, c.latent_solver);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- generators

inline Json to_json(const Range& r) { return Json::array({r.lo, r.hi}); }
inline Json to_json(const CountRange& r) { return Json::array({r.lo, r.hi}); }

template <class R>
void read_range(const Json& j, const char* key, R& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 2) throw InvalidArgument(where + ": '" + key + "' must be a [lo, hi] pair");
  try {
    (*it)[0].get_to(out.lo);
    (*it)[1].get_to(out.hi);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(where + ": bad value for '" + key + "': " + e.what());
  }
  out.validate(key);
}

inline Json to_json(const SineSpec& s) {
  return Json{{"family", "sine"},
              {"amplitude", to_json(s.amplitude)},
              {"frequency", to_json(s.frequency)},
              {"duration", to_json(s.duration)},
              {"observations", to_json(s.observations)},
              {"total_observations", to_json(s.total_observations)},
              {"changepoints", to_json(s.changepoints)},
              {"min_amplitude_change", s.min_amplitude_change},
              {"noise_sd", s.noise_sd},
              {"aligned", s.aligned}};
}

inline SineSpec sine_spec_from_json(const Json& j, SineSpec s = {}) {
  const std::string where = "sine spec";
  reject_unknown_keys(j,
                      {"family", "amplitude", "frequency", "duration", "observations", "total_observations", "changepoints",
                       "min_amplitude_change", "noise_sd", "aligned"},
                      where);
  read_range(j, "amplitude", s.amplitude, where);
  read_range(j, "frequency", s.frequency, where);
  read_range(j, "duration", s.duration, where);
  read_range(j, "observations", s.observations, where);
  read_range(j, "total_observations", s.total_observations, where);
  read_range(j, "changepoints", s.changepoints, where);
  read_optional(j, "min_amplitude_change", s.min_amplitude_change, where);
  read_optional(j, "noise_sd", s.noise_sd, where);
  read_optional(j, "aligned", s.aligned, where);
  s.validate();
  return s;
}

inline Json to_json(const LvSpec& s) {
  return Json{{"family", "lotka_volterra"},
              {"alpha", to_json(s.alpha)},
              {"beta", to_json(s.beta)},
              {"delta", to_json(s.delta)},
              {"gamma", to_json(s.gamma)},
              {"x0", to_json(s.x0)},
              {"y0", to_json(s.y0)},
              {"observations", to_json(s.observations)},
              {"end_time", to_json(s.end_time)},
              {"changepoints", to_json(s.changepoints)},
              {"min_coefficient_change", s.min_coefficient_change},
              {"noise_sd", s.noise_sd},
              {"variant", to_string(s.variant)},
              {"aligned", s.aligned},
              {"max_retries", s.max_retries},
              {"tolerance", s.tolerance}};
}

inline LvSpec lv_spec_from_json(const Json& j, LvSpec s = {}) {
  const std::string where = "lotka-volterra spec";
  reject_unknown_keys(j,
                      {"family", "alpha", "beta", "delta", "gamma", "x0", "y0", "observations", "end_time",
                       "changepoints", "min_coefficient_change", "noise_sd", "variant", "aligned", "max_retries",
                       "tolerance"},
                      where);
  read_range(j, "alpha", s.alpha, where);
  read_range(j, "beta", s.beta, where);
  read_range(j, "delta", s.delta, where);
  read_range(j, "gamma", s.gamma, where);
  read_range(j, "x0", s.x0, where);
  read_range(j, "y0", s.y0, where);
  read_range(j, "observations", s.observations, where);
  read_range(j, "end_time", s.end_time, where);
  read_range(j, "changepoints", s.changepoints, where);
  read_optional(j, "min_coefficient_change", s.min_coefficient_change, where);
  read_optional(j, "noise_sd", s.noise_sd, where);
  std::string variant = to_string(s.variant);
  read_optional(j, "variant", variant, where);
  s.variant = lv_variant_from_string(variant);
  read_optional(j, "aligned", s.aligned, where);
  read_optional(j, "max_retries", s.max_retries, where);
  read_optional(j, "tolerance", s.tolerance, where);
  s.validate();
  return s;
}

inline Json to_json(const MaskSpec& m) {
  return Json{{"extrapolation_fraction", m.extrapolation_fraction},
              {"interpolation_fraction", m.interpolation_fraction},
              {"shared", m.shared}};
}

inline MaskSpec mask_spec_from_json(const Json& j, MaskSpec m = {}) {
  const std::string where = "mask spec";
  reject_unknown_keys(j, {"extrapolation_fraction", "interpolation_fraction", "shared"}, where);
  read_optional(j, "extrapolation_fraction", m.extrapolation_fraction, where);
  read_optional(j, "interpolation_fraction", m.interpolation_fraction, where);
  read_optional(j, "shared", m.shared, where);
  m.validate();
  return m;
}

}  // namespace latseg
