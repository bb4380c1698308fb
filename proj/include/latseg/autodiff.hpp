#pragma once

// Tape-based reverse-mode automatic differentiation over matrix-valued nodes.
//
// A Var is a shared, immutable value plus (optionally) the id of the tape node
// that produced it. Operations whose inputs are all untracked produce
// untracked results and record nothing, so the same model code serves both the
// training path (tracked parameters) and the evaluation path (plain values).

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/tensor.hpp"

namespace latseg {

class Tape;

class Var {
 public:
  Var() : value_(std::make_shared<const Tensor>()) {}
  explicit Var(Tensor v) : value_(std::make_shared<const Tensor>(std::move(v))) {}

  const Tensor& value() const noexcept { return *value_; }
  const std::shared_ptr<const Tensor>& shared_value() const noexcept { return value_; }
  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

  std::size_t rows() const noexcept { return value_->rows(); }
  std::size_t cols() const noexcept { return value_->cols(); }

 private:
  friend class Tape;
  Var(std::shared_ptr<const Tensor> v, Tape* tape, std::size_t id) : value_(std::move(v)), tape_(tape), id_(id) {}

  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Adjoint storage produced by Tape::backward, indexed by node id.
class Gradients {
 public:
  explicit Gradients(std::size_t n) : grads_(n), touched_(n, 0) {}

  /// Calls fill(g) on the (zero-initialised on first use) adjoint of v.
  /// Untracked vars are ignored.
  template <class F>
  void accumulate(const Var& v, F&& fill) {
    if (!v.tracked()) return;
    const std::size_t i = v.id();
    if (!touched_[i]) {
      grads_[i] = Tensor(v.value().shape(), 0.0);
      touched_[i] = 1;
    }
    fill(grads_[i]);
  }

  bool touched(std::size_t id) const { return id < touched_.size() && touched_[id]; }
  const Tensor& raw(std::size_t id) const { return grads_[id]; }

  /// Gradient with respect to v; zeros when v is unreachable from the output.
  Tensor of(const Var& v) const {
    if (v.tracked() && touched(v.id())) return grads_[v.id()];
    return Tensor(v.value().shape(), 0.0);
  }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::vector<char> touched_;
};

class Tape {
 public:
  using Backward = std::function<void(const Tensor& out_grad, Gradients& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a differentiable input (a parameter or a probed input).
  Var leaf(Tensor value) {
    nodes_.push_back(Backward{});
    return Var(std::make_shared<const Tensor>(std::move(value)), this, nodes_.size() - 1);
  }

  Var record(Tensor value, Backward backward) {
    nodes_.push_back(std::move(backward));
    return Var(std::make_shared<const Tensor>(std::move(value)), this, nodes_.size() - 1);
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar output. Nodes are visited in exact reverse
  /// recording order; nodes that received no adjoint are skipped.
  Gradients backward(const Var& output) const {
    if (output.tape() != this) throw InvalidArgument("backward: output is not recorded on this tape");
    if (output.value().size() != 1) {
      throw InvalidArgument("backward: output must be scalar, got shape " + output.value().shape_string());
    }
    Gradients grads(nodes_.size());
    grads.grads_[output.id()] = Tensor(output.value().shape(), 1.0);
    grads.touched_[output.id()] = 1;
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      if (!grads.touched_[i] || !nodes_[i]) continue;
      // Closures only write adjoints of earlier nodes, so this reference stays valid.
      const Tensor& g = grads.grads_[i];
      nodes_[i](g, grads);
    }
    return grads;
  }

 private:
  std::vector<Backward> nodes_;
};

namespace ad {

namespace detail {

inline Tape* common_tape(std::initializer_list<const Var*> vars) {
  Tape* tape = nullptr;
  for (const Var* v : vars) {
    if (!v->tracked()) continue;
    if (tape && tape != v->tape()) throw InvalidArgument("operands recorded on different tapes");
    tape = v->tape();
  }
  return tape;
}

inline Tape* common_tape(std::span<const Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.tracked()) continue;
    if (tape && tape != v.tape()) throw InvalidArgument("operands recorded on different tapes");
    tape = v.tape();
  }
  return tape;
}

inline Var make(Tape* tape, Tensor value, Tape::Backward backward) {
  if (!tape) return Var(std::move(value));
  return tape->record(std::move(value), std::move(backward));
}

// Broadcasting between a (R x C) operand and (R x C), (1 x C) or scalar operands.
struct Broadcast {
  std::size_t rows, cols;
  std::vector<std::size_t> shape;

  static std::size_t index(const Tensor& t, std::size_t r, std::size_t c, std::size_t cols) {
    if (t.size() == 1) return 0;
    if (t.rows() == 1) return c;
    return r * cols + c;
  }
};

inline Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  auto fits = [](const Tensor& small, const Tensor& big) {
    return small.size() == 1 || small.same_matrix_shape(big) || (small.rows() == 1 && small.cols() == big.cols());
  };
  const Tensor& big = a.size() >= b.size() ? a : b;
  const Tensor& small = a.size() >= b.size() ? b : a;
  if (!fits(small, big)) {
    throw InvalidArgument(std::string("shape mismatch in ") + op + ": " + a.shape_string() + " vs " +
                          b.shape_string());
  }
  return {big.rows(), big.cols(), big.shape()};
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
inline MutMap as_matrix(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

template <class Fwd, class Da, class Db>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, Da da, Db db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast(av, bv, name);
  Tensor out(bc.shape);
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      out[r * bc.cols + c] = fwd(av[Broadcast::index(av, r, c, bc.cols)], bv[Broadcast::index(bv, r, c, bc.cols)]);
    }
  }
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Var(std::move(out));
  auto pa = a.shared_value();
  auto pb = b.shared_value();
  return tape->record(std::move(out), [a, b, pa, pb, bc, da, db](const Tensor& g, Gradients& grads) {
    const Tensor& av = *pa;
    const Tensor& bv = *pb;
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const double x = av[Broadcast::index(av, r, c, bc.cols)];
          const double y = bv[Broadcast::index(bv, r, c, bc.cols)];
          ga[Broadcast::index(av, r, c, bc.cols)] += g[r * bc.cols + c] * da(x, y);
        }
    });
    grads.accumulate(b, [&](Tensor& gb) {
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const double x = av[Broadcast::index(av, r, c, bc.cols)];
          const double y = bv[Broadcast::index(bv, r, c, bc.cols)];
          gb[Broadcast::index(bv, r, c, bc.cols)] += g[r * bc.cols + c] * db(x, y);
        }
    });
  });
}

// Elementwise map whose derivative is expressed in terms of (input, output).
template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  if (!a.tracked()) return Var(std::move(out));
  auto pa = a.shared_value();
  auto po = std::make_shared<const Tensor>(out);
  return a.tape()->record(std::move(out), [a, pa, po, deriv](const Tensor& g, Gradients& grads) {
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * deriv((*pa)[i], (*po)[i]);
    });
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var scale(const Var& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

namespace detail {

/// exp-based tanh, several times faster than libm; relative error below 1e-12.
inline double fast_tanh(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-3) {
    const double x2 = x * x;
    return x * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0)));
  }
  if (ax > 20.0) return std::copysign(1.0, x);
  const double e = std::exp(-2.0 * ax);
  return std::copysign((1.0 - e) / (1.0 + e), x);
}

}  // namespace detail

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return detail::fast_tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(const Var& a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// max(a, floor); zero gradient where the floor is active.
inline Var clamp_min(const Var& a, double floor) {
  return detail::unary(
      a, [floor](double x) { return x < floor ? floor : x; }, [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

/// Sum of all entries, as a scalar.
inline Var sum(const Var& a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::scalar(av.sum());
  if (!a.tracked()) return Var(std::move(out));
  return a.tape()->record(std::move(out), [a](const Tensor& g, Gradients& grads) {
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
  });
}

/// Per-row sums: (R x C) -> (R x 1).
inline Var row_sums(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t R = av.rows(), C = av.cols();
  Tensor out = Tensor::matrix(R, 1);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += av.at(r, c);
    out[r] = s;
  }
  if (!a.tracked()) return Var(std::move(out));
  return a.tape()->record(std::move(out), [a, R, C](const Tensor& g, Gradients& grads) {
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[r];
    });
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Affine map y = x W^T + b for x (R x in), W (out x in), b (out).
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.cols() != wv.cols()) {
    throw InvalidArgument("linear: input width " + std::to_string(xv.cols()) + " does not match weight " +
                          wv.shape_string());
  }
  if (bv.size() != wv.rows()) {
    throw InvalidArgument("linear: bias " + bv.shape_string() + " does not match weight " + wv.shape_string());
  }
  const std::size_t R = xv.rows();
  Tensor out = Tensor::matrix(R, wv.rows());
  {
    auto o = detail::as_matrix(out);
    o.noalias() = detail::as_matrix(xv) * detail::as_matrix(wv).transpose();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < wv.rows(); ++c) o(r, c) += bv[c];
  }
  Tape* tape = detail::common_tape({&x, &weight, &bias});
  if (!tape) return Var(std::move(out));
  auto px = x.shared_value();
  auto pw = weight.shared_value();
  return tape->record(std::move(out), [x, weight, bias, px, pw](const Tensor& g, Gradients& grads) {
    const auto gm = detail::as_matrix(g);
    grads.accumulate(x, [&](Tensor& gx) { detail::as_matrix(gx).noalias() += gm * detail::as_matrix(*pw); });
    grads.accumulate(weight, [&](Tensor& gw) { detail::as_matrix(gw).noalias() += gm.transpose() * detail::as_matrix(*px); });
    grads.accumulate(bias, [&](Tensor& gb) {
      for (Eigen::Index r = 0; r < gm.rows(); ++r)
        for (Eigen::Index c = 0; c < gm.cols(); ++c) gb[static_cast<std::size_t>(c)] += gm(r, c);
    });
  });
}

/// Columns [begin, end) of a matrix.
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require(begin < end && end <= av.cols(), "slice_cols: bad column range");
  const std::size_t R = av.rows(), C = av.cols(), W = end - begin;
  Tensor out = Tensor::matrix(R, W);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < W; ++c) out.at(r, c) = av.at(r, begin + c);
  if (!a.tracked()) return Var(std::move(out));
  return a.tape()->record(std::move(out), [a, R, C, W, begin](const Tensor& g, Gradients& grads) {
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < W; ++c) ga[r * C + begin + c] += g[r * W + c];
    });
  });
}

/// Rows listed in `index` (repeats allowed).
inline Var gather_rows(const Var& a, std::vector<std::size_t> index) {
  const Tensor& av = a.value();
  const std::size_t C = av.cols();
  Tensor out = Tensor::matrix(index.size(), C);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < av.rows(), "gather_rows: index out of range");
    for (std::size_t c = 0; c < C; ++c) out.at(i, c) = av.at(index[i], c);
  }
  if (!a.tracked()) return Var(std::move(out));
  return a.tape()->record(std::move(out), [a, C, index = std::move(index)](const Tensor& g, Gradients& grads) {
    grads.accumulate(a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < index.size(); ++i)
        for (std::size_t c = 0; c < C; ++c) ga[index[i] * C + c] += g[i * C + c];
    });
  });
}

/// Vertical concatenation of matrices with equal column counts.
inline Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no operands");
  const std::size_t C = parts.front().value().cols();
  std::size_t R = 0;
  for (const Var& p : parts) {
    require(p.value().cols() == C, "concat_rows: column mismatch");
    R += p.value().rows();
  }
  Tensor out = Tensor::matrix(R, C);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  Tape* tape = detail::common_tape(parts);
  if (!tape) return Var(std::move(out));
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape->record(std::move(out), [keep = std::move(keep)](const Tensor& g, Gradients& grads) {
    std::size_t off = 0;
    for (const Var& p : keep) {
      const std::size_t n = p.value().size();
      grads.accumulate(p, [&](Tensor& gp) {
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      });
      off += n;
    }
  });
}

/// base + sum_i coeffs[i] * terms[i], all of identical shape. One tape node.
inline Var linear_combination(const Var& base, std::span<const Var> terms, std::span<const double> coeffs) {
  require(terms.size() == coeffs.size(), "linear_combination: terms/coeffs length mismatch");
  Tensor out = base.value();
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const Tensor& tv = terms[k].value();
    if (!tv.same_matrix_shape(out)) {
      throw InvalidArgument("linear_combination: shape mismatch " + tv.shape_string() + " vs " + out.shape_string());
    }
    const double c = coeffs[k];
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * tv[i];
  }
  Tape* tape = base.tape();
  Tape* other = detail::common_tape(terms);
  if (tape && other && tape != other) throw InvalidArgument("operands recorded on different tapes");
  if (!tape) tape = other;
  if (!tape) return Var(std::move(out));
  std::vector<Var> keep(terms.begin(), terms.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return tape->record(std::move(out), [base, keep = std::move(keep), cs = std::move(cs)](const Tensor& g, Gradients& grads) {
    grads.accumulate(base, [&](Tensor& gb) { gb += g; });
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (cs[k] == 0.0) continue;
      grads.accumulate(keep[k], [&](Tensor& gk) {
        for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += cs[k] * g[i];
      });
    }
  });
}

}  // namespace ad

inline Var operator+(const Var& a, const Var& b) { return ad::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ad::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ad::mul(a, b); }
inline Var operator*(double s, const Var& a) { return ad::scale(a, s); }
inline Var operator*(const Var& a, double s) { return ad::scale(a, s); }
inline Var operator-(const Var& a) { return ad::neg(a); }

}  // namespace latseg
