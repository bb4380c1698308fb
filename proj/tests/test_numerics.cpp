#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "latseg/adamax.hpp"
#include "latseg/autodiff.hpp"
#include "latseg/layers.hpp"

using namespace latseg;
using latseg::testing::check_gradients;
using latseg::testing::random_tensor;

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({0, 3}), InvalidArgument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST(Mlp, IdentityLayerPassesInputThrough) {
  MlpParams p;
  p.weights = {Tensor::matrix({{1, 0}, {0, 1}})};
  p.biases = {Tensor::vector({0, 0})};
  p.activations = {Activation::identity};
  const Tensor out = mlp_forward(p, Tensor::vector({1.5, -2.0}));
  EXPECT_EQ(out, Tensor::vector({1.5, -2.0}));
}

TEST(Mlp, ReluLayerHandComputed) {
  MlpParams p;
  p.weights = {Tensor::matrix({{2, 0}, {0, 3}})};
  p.biases = {Tensor::vector({1, 1})};
  p.activations = {Activation::relu};
  // [-1*2 + 1, 2*3 + 1] = [-1, 7] -> relu -> [0, 7]
  const Tensor out = mlp_forward(p, Tensor::vector({-1.0, 2.0}));
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_DOUBLE_EQ(out[1], 7.0);
}

TEST(Mlp, ZeroTanhLayerGivesZeros) {
  MlpParams p;
  p.weights = {Tensor::matrix(3, 2)};
  p.biases = {Tensor::vector({0, 0, 0})};
  p.activations = {Activation::tanh};
  const Tensor out = mlp_forward(p, Tensor::vector({4.0, -7.0}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, ShapeMismatchThrows) {
  std::mt19937_64 rng(1);
  const MlpParams p = MlpParams::create(3, {4}, 2, Activation::tanh, Activation::identity, rng);
  EXPECT_THROW(mlp_forward(p, Tensor::vector({1, 2})), InvalidArgument);
}

TEST(Mlp, LayersMustChain) {
  MlpParams p;
  p.weights = {Tensor::matrix(3, 2), Tensor::matrix(2, 4)};
  p.biases = {Tensor::vector({0, 0, 0}), Tensor::vector({0, 0})};
  p.activations = {Activation::tanh, Activation::identity};
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Mlp, ForwardIsDeterministic) {
  std::mt19937_64 rng(3);
  const MlpParams p = MlpParams::create(3, {8, 8}, 2, Activation::tanh, Activation::identity, rng);
  const Tensor x = random_tensor({5, 3}, rng);
  EXPECT_EQ(mlp_forward(p, x), mlp_forward(p, x));
}

TEST(Gru, ZeroParamsHalveHidden) {
  const GruParams g = GruParams::zeros(2, 3);
  const Tensor h = Tensor::vector({1.0, -2.0, 0.5});
  const Tensor out = gru_cell_step(g, h, Tensor::vector({3.0, 4.0}));
  ASSERT_EQ(out.shape(), h.shape());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
}

TEST(Gru, ZeroEverythingStaysZero) {
  const GruParams g = GruParams::zeros(2, 3);
  const Tensor out = gru_cell_step(g, Tensor::vector({0, 0, 0}), Tensor::vector({0, 0}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gru, OutputShapeMatchesHidden) {
  std::mt19937_64 rng(5);
  const GruParams g = GruParams::create(4, 6, rng);
  const Tensor h = random_tensor({6}, rng);
  EXPECT_EQ(gru_cell_step(g, h, random_tensor({4}, rng)).shape(), h.shape());
  EXPECT_THROW(gru_cell_step(g, random_tensor({5}, rng), random_tensor({4}, rng)), InvalidArgument);
  EXPECT_THROW(gru_cell_step(g, h, random_tensor({3}, rng)), InvalidArgument);
}

TEST(Backward, Square) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3.0));
  const Gradients g = tape.backward(ad::square(x));
  EXPECT_DOUBLE_EQ(g.of(x)[0], 6.0);
}

TEST(Backward, ProductPlusY) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var y = tape.leaf(Tensor::scalar(5.0));
  const Gradients g = tape.backward(x * y + y);
  EXPECT_DOUBLE_EQ(g.of(x)[0], 5.0);
  EXPECT_DOUBLE_EQ(g.of(y)[0], 3.0);
}

TEST(Backward, NonScalarOutputRejected) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x * x), InvalidArgument);
}

TEST(Backward, UnreachableLeafGetsZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var unused = tape.leaf(Tensor::vector({1, 2, 3}));
  const Gradients g = tape.backward(ad::square(x));
  const Tensor gu = g.of(unused);
  ASSERT_EQ(gu.size(), 3u);
  for (double v : gu.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MixingTapesRejected) {
  Tape a, b;
  const Var x = a.leaf(Tensor::scalar(1.0));
  const Var y = b.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(x + y, InvalidArgument);
}

TEST(Backward, MlpSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const MlpParams p = MlpParams::create(3, {5, 4}, 2, Activation::tanh, Activation::identity, rng);
  std::vector<Tensor> inputs = {random_tensor({4, 3}, rng)};
  for (std::size_t i = 0; i < p.depth(); ++i) {
    inputs.push_back(p.weights[i]);
    inputs.push_back(p.biases[i]);
  }
  auto f = [&](std::span<const Var> v) {
    MlpVars m;
    for (std::size_t i = 0; i < p.depth(); ++i) {
      m.weights.push_back(v[1 + 2 * i]);
      m.biases.push_back(v[2 + 2 * i]);
    }
    m.activations = p.activations;
    return ad::sum(mlp_forward(m, v[0]));
  };
  EXPECT_LE(check_gradients(f, inputs).worst_relative_error, 1e-4);
}

// Every differentiable primitive inside a random composite, inputs in [-2, 2].
TEST(Backward, RandomCompositesMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({1, 4}, rng), random_tensor({2, 4}, rng),
                                  random_tensor({2}, rng), random_tensor({3, 4}, rng, 0.5, 2.0)};
    auto f = [](std::span<const Var> v) {
      const Var a = ad::tanh(v[0]) * v[1] + ad::sigmoid(v[0] - v[1]);
      const Var b = ad::linear(a, v[2], v[3]);                       // 3 x 2
      const Var c = ad::relu(b) + ad::exp(ad::scale(b, 0.3));
      const Var d = ad::log(v[4]) * ad::square(v[0]);
      const std::array<Var, 2> rows = {ad::slice_cols(d, 1, 3), c};
      const Var e = ad::concat_rows(rows);                          // 6 x 2
      const Var g = ad::gather_rows(e, {0, 5, 2, 2});
      const std::array<Var, 2> terms = {ad::slice_cols(v[0], 0, 2), c};
      const std::array<double, 2> cs = {0.7, -1.3};
      const Var h = ad::linear_combination(c, terms, cs);
      return ad::sum(ad::row_sums(g)) + ad::mean(h) + ad::sum(ad::clamp_min(v[0], -0.5));
    };
    EXPECT_LE(check_gradients(f, inputs).worst_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(Backward, GruStepMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const GruParams g = GruParams::create(3, 4, rng);
  std::vector<Tensor> inputs = {random_tensor({2, 4}, rng), random_tensor({2, 3}, rng), g.w_z, g.w_r, g.w_n,
                                g.u_z, g.u_r, g.u_n, random_tensor({4}, rng), random_tensor({4}, rng),
                                random_tensor({4}, rng)};
  auto f = [](std::span<const Var> v) {
    const GruVars gv{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
    const Var h1 = gru_cell_step(gv, v[0], v[1]);
    return ad::sum(ad::square(gru_cell_step(gv, h1, v[1])));
  };
  EXPECT_LE(check_gradients(f, inputs).worst_relative_error, 1e-4);
}

TEST(Adamax, SingleScalarStep) {
  Tensor p = Tensor::scalar(1.0);
  AdamaxState st;
  st.learning_rate = 0.01;
  const std::vector<NamedTensor> params = {{"p", &p}};
  const std::vector<Tensor> grads = {Tensor::scalar(1.0)};
  adamax_step(st, params, grads);
  EXPECT_NEAR(st.first_moment[0][0], 0.1, 1e-15);
  EXPECT_NEAR(st.inf_norm[0][0], 1.0, 1e-7);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
}

TEST(Adamax, ZeroGradientFromFreshStateIsBitIdentical) {
  std::mt19937_64 rng(9);
  Tensor a = random_tensor({3, 2}, rng);
  const Tensor a0 = a;
  AdamaxState st;
  const std::vector<NamedTensor> params = {{"a", &a}};
  const std::vector<Tensor> grads = {Tensor({3, 2}, 0.0)};
  adamax_step(st, params, grads);
  EXPECT_EQ(a, a0);
}

TEST(Adamax, ZeroGradientDecaysAccumulators) {
  Tensor p = Tensor::scalar(1.0);
  AdamaxState st;
  const std::vector<NamedTensor> params = {{"p", &p}};
  adamax_step(st, params, std::vector<Tensor>{Tensor::scalar(2.0)});
  const double m = st.first_moment[0][0];
  const double u = st.inf_norm[0][0];
  adamax_step(st, params, std::vector<Tensor>{Tensor::scalar(0.0)});
  EXPECT_DOUBLE_EQ(st.first_moment[0][0], st.beta1 * m);
  EXPECT_DOUBLE_EQ(st.inf_norm[0][0], st.beta2 * u);
  EXPECT_GE(st.inf_norm[0][0], 0.0);
}

TEST(Adamax, RepeatedStepsMoveAgainstGradientSign) {
  Tensor p = Tensor::vector({0.0, 0.0});
  AdamaxState st;
  const std::vector<NamedTensor> params = {{"p", &p}};
  const std::vector<Tensor> grads = {Tensor::vector({0.5, -3.0})};
  adamax_step(st, params, grads);
  const Tensor after1 = p;
  adamax_step(st, params, grads);
  EXPECT_LT(after1[0], 0.0);
  EXPECT_LT(p[0], after1[0]);
  EXPECT_GT(after1[1], 0.0);
  EXPECT_GT(p[1], after1[1]);
}

TEST(Adamax, NonFiniteGradientNamesParameter) {
  Tensor p = Tensor::scalar(1.0);
  AdamaxState st;
  const std::vector<NamedTensor> params = {{"decoder.0.weight", &p}};
  try {
    adamax_step(st, params, std::vector<Tensor>{Tensor::scalar(std::nan(""))});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.0.weight"), std::string::npos);
  }
}

TEST(ClipGradNorm, BelowThresholdUnchanged) {
  std::vector<Tensor> g = {Tensor::vector({0.6, 0.8})};
  clip_grad_norm(g, 2.0);
  EXPECT_EQ(g[0], Tensor::vector({0.6, 0.8}));
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  std::vector<Tensor> g = {Tensor::vector({3.0, 4.0})};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 2.0), 5.0);
  EXPECT_NEAR(g[0][0], 1.2, 1e-15);
  EXPECT_NEAR(g[0][1], 1.6, 1e-15);
}

TEST(ClipGradNorm, ZerosStayZero) {
  std::vector<Tensor> g = {Tensor::vector({0.0, 0.0}), Tensor::scalar(0.0)};
  clip_grad_norm(g, 2.0);
  EXPECT_EQ(g[0].squared_norm() + g[1].squared_norm(), 0.0);
}

TEST(ClipGradNorm, RandomOutputsWithinBound) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> scale(0.01, 50.0);
  for (int t = 0; t < 200; ++t) {
    const double s = scale(rng);
    std::vector<Tensor> g = {random_tensor({3, 3}, rng, -s, s), random_tensor({5}, rng, -s, s)};
    const double max_norm = scale(rng) / 10.0;
    clip_grad_norm(g, max_norm);
    EXPECT_LE(std::sqrt(g[0].squared_norm() + g[1].squared_norm()), max_norm + 1e-12);
  }
  std::vector<Tensor> g = {Tensor::scalar(1.0)};
  EXPECT_THROW(clip_grad_norm(g, 0.0), InvalidArgument);
}
