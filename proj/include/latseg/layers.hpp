#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "latseg/autodiff.hpp"
#include "latseg/error.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

enum class Activation { identity, tanh, relu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    default: return "identity";
  }
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw InvalidArgument("unknown activation '" + s + "'");
}

inline Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
    default: return x;
  }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
inline Tensor init_weight(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w = Tensor::matrix(out, in);
  for (double& v : w.storage()) v = dist(rng);
  return w;
}

struct MlpParams {
  std::vector<Tensor> weights;  // (out x in)
  std::vector<Tensor> biases;   // (out)
  std::vector<Activation> activations;

  std::size_t input_size() const { return weights.front().cols(); }
  std::size_t output_size() const { return weights.back().rows(); }
  std::size_t depth() const { return weights.size(); }

  /// Layer widths in -> hidden... -> out; `hidden_activation` on hidden layers,
  /// `output_activation` on the last.
  static MlpParams create(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                          Activation hidden_activation, Activation output_activation, std::mt19937_64& rng) {
    MlpParams p;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
      p.weights.push_back(init_weight(h, prev, rng));
      p.biases.push_back(Tensor::vector(std::vector<double>(h, 0.0)));
      p.activations.push_back(hidden_activation);
      prev = h;
    }
    p.weights.push_back(init_weight(out, prev, rng));
    p.biases.push_back(Tensor::vector(std::vector<double>(out, 0.0)));
    p.activations.push_back(output_activation);
    p.validate();
    return p;
  }

  void validate() const {
    if (weights.empty()) throw InvalidArgument("mlp: no layers");
    if (weights.size() != biases.size() || weights.size() != activations.size()) {
      throw InvalidArgument("mlp: weights/biases/activations count mismatch");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (biases[i].size() != weights[i].rows()) throw InvalidArgument("mlp: bias width mismatch at layer " + std::to_string(i));
      if (i > 0 && weights[i].cols() != weights[i - 1].rows()) {
        throw InvalidArgument("mlp: layer " + std::to_string(i) + " input does not chain from previous output");
      }
    }
  }
};

/// Gated recurrent unit; gate order is update (z), reset (r), candidate (n).
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r * h) + bn)
///   h' = z * h + (1 - z) * n
struct GruParams {
  Tensor w_z, w_r, w_n;  // (hidden x input)
  Tensor u_z, u_r, u_n;  // (hidden x hidden)
  Tensor b_z, b_r, b_n;  // (hidden)

  std::size_t hidden_size() const { return u_z.rows(); }
  std::size_t input_size() const { return w_z.cols(); }

  static GruParams create(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
    GruParams g;
    g.w_z = init_weight(hidden, input, rng);
    g.w_r = init_weight(hidden, input, rng);
    g.w_n = init_weight(hidden, input, rng);
    g.u_z = init_weight(hidden, hidden, rng);
    g.u_r = init_weight(hidden, hidden, rng);
    g.u_n = init_weight(hidden, hidden, rng);
    g.b_z = Tensor::vector(std::vector<double>(hidden, 0.0));
    g.b_r = g.b_z;
    g.b_n = g.b_z;
    return g;
  }

  static GruParams zeros(std::size_t input, std::size_t hidden) {
    GruParams g;
    g.w_z = g.w_r = g.w_n = Tensor::matrix(hidden, input);
    g.u_z = g.u_r = g.u_n = Tensor::matrix(hidden, hidden);
    g.b_z = g.b_r = g.b_n = Tensor::vector(std::vector<double>(hidden, 0.0));
    return g;
  }
};

// Var-side views of the parameter structs. Binding to a tape makes each
// tensor a leaf; binding to nullptr produces untracked constants.

inline Var bind_tensor(const Tensor& t, Tape* tape) { return tape ? tape->leaf(t) : Var(t); }

struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Activation> activations;

  std::size_t input_size() const { return weights.front().value().cols(); }
};

inline MlpVars bind(const MlpParams& p, Tape* tape) {
  MlpVars v;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    v.weights.push_back(bind_tensor(p.weights[i], tape));
    v.biases.push_back(bind_tensor(p.biases[i], tape));
  }
  v.activations = p.activations;
  return v;
}

struct GruVars {
  Var w_z, w_r, w_n, u_z, u_r, u_n, b_z, b_r, b_n;
  std::size_t hidden_size() const { return u_z.value().rows(); }
  std::size_t input_size() const { return w_z.value().cols(); }
};

inline GruVars bind(const GruParams& p, Tape* tape) {
  return GruVars{bind_tensor(p.w_z, tape), bind_tensor(p.w_r, tape), bind_tensor(p.w_n, tape),
                 bind_tensor(p.u_z, tape), bind_tensor(p.u_r, tape), bind_tensor(p.u_n, tape),
                 bind_tensor(p.b_z, tape), bind_tensor(p.b_r, tape), bind_tensor(p.b_n, tape)};
}

/// Rows of `input` are independent samples.
inline Var mlp_forward(const MlpVars& mlp, const Var& input) {
  if (input.cols() != mlp.input_size()) {
    throw InvalidArgument("mlp_forward: input width " + std::to_string(input.cols()) + " != layer input " +
                          std::to_string(mlp.input_size()));
  }
  Var h = input;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    h = activate(ad::linear(h, mlp.weights[i], mlp.biases[i]), mlp.activations[i]);
  }
  return h;
}

inline Tensor mlp_forward(const MlpParams& mlp, const Tensor& input) {
  Tensor out = mlp_forward(bind(mlp, nullptr), Var(input)).value();
  if (input.rank() == 1) return out.reshaped({out.size()});
  return out;
}

inline Var gru_cell_step(const GruVars& g, const Var& hidden, const Var& input) {
  if (hidden.cols() != g.hidden_size()) {
    throw InvalidArgument("gru_cell_step: hidden width " + std::to_string(hidden.cols()) + " != " +
                          std::to_string(g.hidden_size()));
  }
  if (input.cols() != g.input_size()) {
    throw InvalidArgument("gru_cell_step: input width " + std::to_string(input.cols()) + " != " +
                          std::to_string(g.input_size()));
  }
  if (hidden.rows() != input.rows()) throw InvalidArgument("gru_cell_step: batch size mismatch");
  const Tensor zero_bias(g.b_z.value().shape(), 0.0);
  const Var no_bias(zero_bias);
  const Var z = ad::sigmoid(ad::linear(input, g.w_z, g.b_z) + ad::linear(hidden, g.u_z, no_bias));
  const Var r = ad::sigmoid(ad::linear(input, g.w_r, g.b_r) + ad::linear(hidden, g.u_r, no_bias));
  const Var n = ad::tanh(ad::linear(input, g.w_n, g.b_n) + ad::linear(r * hidden, g.u_n, no_bias));
  // h' = n + z * (h - n)
  return n + z * (hidden - n);
}

inline Tensor gru_cell_step(const GruParams& g, const Tensor& hidden, const Tensor& input) {
  return gru_cell_step(bind(g, nullptr), Var(hidden), Var(input)).value().reshaped(hidden.shape());
}

}  // namespace latseg
