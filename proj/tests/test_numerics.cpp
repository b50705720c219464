#include <cmath>

#include <gtest/gtest.h>

#include "dualvq/numerics/gradcheck.hpp"
#include "dualvq/numerics/ops.hpp"
#include "dualvq/numerics/optimizer.hpp"
#include "dualvq/numerics/rng.hpp"

using namespace dualvq;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST(Tensor, RejectsWrongValueCount) { EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError); }

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor(1, 2).item(), ShapeError);
}

TEST(Graph, SquareForwardAndBackward) {
  Graph g;
  const Var x = g.variable(Tensor::scalar(3.0));
  const Var y = ops::mul(x, x);
  EXPECT_DOUBLE_EQ(g.value(y).item(), 9.0);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 6.0);
}

TEST(Graph, StopGradientFactorContributesNothing) {
  Graph g;
  const Var x = g.variable(Tensor::scalar(3.0));
  const Var y = ops::mul(ops::stop_gradient(x), x);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.value(y).item(), 9.0);
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 3.0);
}

TEST(Graph, BackwardRejectsNonScalarLoss) {
  Graph g;
  const Var x = g.variable(Tensor(2, 1, 1.0));
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Graph, NonFiniteOutputIsReported) {
  Graph g;
  const Var x = g.variable(Tensor::scalar(1e300));
  EXPECT_THROW(ops::mul(x, x), std::domain_error);
}

TEST(Graph, ShapeMismatchNamesOp) {
  Graph g;
  const Var a = g.variable(Tensor(2, 3));
  const Var b = g.variable(Tensor(2, 3));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Graph, MixingGraphsIsRejected) {
  Graph g1, g2;
  const Var a = g1.variable(Tensor::scalar(1));
  const Var b = g2.variable(Tensor::scalar(1));
  EXPECT_ANY_THROW(ops::add(a, b));
}

TEST(Ops, SoftmaxOfEqualLogits) {
  Graph g;
  const Var logits = g.variable(Tensor::row({0.0, 0.0}));
  const Var loss = ops::softmax_cross_entropy(logits, {0});
  g.backward(loss);
  // d(-log p0)/dlogits = p - onehot, so p = grad + onehot.
  const Tensor d = g.grad(logits);
  EXPECT_DOUBLE_EQ(d[0] + 1.0, 0.5);
  EXPECT_DOUBLE_EQ(d[1], 0.5);
  EXPECT_NEAR(g.value(loss).item(), std::log(2.0), 1e-15);
}

TEST(Ops, Conv1dDifferenceKernel) {
  Graph g;
  const Var x = g.constant(Tensor(3, 1, std::vector<double>{1, 2, 4}));
  const Var w = g.constant(Tensor(2, 1, std::vector<double>{1, -1}));
  const Tensor& y = g.value(ops::conv1d(x, w, std::nullopt, 2, 1));
  ASSERT_EQ(y.rows(), 2u);
  EXPECT_DOUBLE_EQ(y[0], -1.0);
  EXPECT_DOUBLE_EQ(y[1], -2.0);
}

TEST(Ops, ConvTransposeLength) {
  Graph g;
  const Var x = g.constant(Tensor(5, 2, 1.0));
  const Var w = g.constant(Tensor(2, 4 * 3, 0.5));
  EXPECT_EQ(g.value(ops::conv_transpose1d(x, w, std::nullopt, 4, 4)).rows(), 20u);
  EXPECT_EQ(g.value(ops::conv_transpose1d(x, w, std::nullopt, 4, 2)).rows(), 12u);
}

TEST(Ops, TwoSpeakerCrossEntropy) {
  Graph g;
  const Var logits = g.constant(Tensor::row({5.0, -5.0}));
  EXPECT_NEAR(g.value(ops::softmax_cross_entropy(logits, {0})).item(), std::log1p(std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(g.value(ops::softmax_cross_entropy(logits, {0})).item(), 4.54e-5, 1e-7);
}

TEST(Ops, AngularSoftmaxMarginOneIsNormalisedSoftmax) {
  Rng rng(3);
  const Tensor X = random_tensor(4, 5, rng), W = random_tensor(3, 5, rng);
  const std::vector<std::size_t> y{0, 2, 1, 2};
  Graph g;
  const double a = g.value(ops::asoftmax_cross_entropy(g.constant(X), g.constant(W), y, 1)).item();
  Tensor logits(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0, n = 0.0;
      for (std::size_t k = 0; k < 5; ++k) {
        dot += X(r, k) * W(j, k);
        n += W(j, k) * W(j, k);
      }
      logits(r, j) = dot / std::sqrt(n);
    }
  }
  const double b = g.value(ops::softmax_cross_entropy(g.constant(logits), y)).item();
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Ops, SymmetricLogitsGiveLogTwoForBothHeads) {
  Graph g;
  EXPECT_NEAR(g.value(ops::softmax_cross_entropy(g.constant(Tensor::row({1.5, 1.5})), {1})).item(), std::log(2.0), 1e-15);
  // Equal angles to both class directions with margin 1.
  const Var x = g.constant(Tensor::row({1.0, 1.0}));
  const Var w = g.constant(Tensor(2, 2, std::vector<double>{1, 0, 0, 1}));
  EXPECT_NEAR(g.value(ops::asoftmax_cross_entropy(x, w, {0}, 1)).item(), std::log(2.0), 1e-15);
}

TEST(Ops, AngularMarginMatchesDefinition) {
  for (int m : {1, 2, 3, 4}) {
    for (double theta = 0.01; theta < 3.14; theta += 0.05) {
      const int k = static_cast<int>(std::floor(theta * m / std::numbers::pi));
      const double expect = (k % 2 == 0 ? 1.0 : -1.0) * std::cos(m * theta) - 2.0 * k;
      EXPECT_NEAR(ops::angular_margin(std::cos(theta), m).first, expect, 1e-9) << "m=" << m << " theta=" << theta;
    }
  }
}

TEST(Ops, AngularTargetScoreNonIncreasingInMargin) {
  for (double theta = 0.0; theta <= std::numbers::pi; theta += 0.01) {
    double prev = ops::angular_margin(std::cos(theta), 1).first;
    for (int m = 2; m <= 6; ++m) {
      const double cur = ops::angular_margin(std::cos(theta), m).first;
      EXPECT_LE(cur, prev + 1e-12) << "m=" << m << " theta=" << theta;
      prev = cur;
    }
  }
}

TEST(Ops, GradReverseScalesUpstream) {
  Graph g;
  const Var x = g.variable(Tensor::row({1, 2, 3}));
  const Var r = ops::grad_reverse(x, 1.0);
  EXPECT_EQ(g.value(r), g.value(x));

  Graph h;
  const Var s = h.variable(Tensor::scalar(3.0));
  const Var rs = ops::grad_reverse(s, 1.0);
  h.backward(ops::mul(rs, rs));
  EXPECT_DOUBLE_EQ(h.grad(s).item(), -6.0);

  Graph z;
  const Var t = z.variable(Tensor::scalar(3.0));
  const Var rt = ops::grad_reverse(t, 0.0);
  z.backward(ops::mul(rt, rt));
  EXPECT_DOUBLE_EQ(z.grad(t).item(), 0.0);
}

TEST(Ops, GradReverseRejectsNegativeLambda) {
  Graph g;
  EXPECT_THROW(ops::grad_reverse(g.variable(Tensor::scalar(1)), -1.0), std::invalid_argument);
}

TEST(Ops, LabelOutOfRange) {
  Graph g;
  EXPECT_THROW(ops::softmax_cross_entropy(g.constant(Tensor::row({0, 0})), {2}), std::out_of_range);
}

TEST(Ops, MeanRowsIsPermutationInvariant) {
  Graph g;
  const Var a = g.constant(Tensor(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6}));
  const Var b = g.constant(Tensor(3, 2, std::vector<double>{5, 6, 1, 2, 3, 4}));
  EXPECT_EQ(g.value(ops::mean_rows(a)), g.value(ops::mean_rows(b)));
  const Var c = g.constant(Tensor(4, 2, std::vector<double>{7, -1, 7, -1, 7, -1, 7, -1}));
  EXPECT_EQ(g.value(ops::mean_rows(c)), Tensor::row({7, -1}));
}

TEST(GradCheck, TwoLayerNetwork) {
  Rng rng(11);
  Parameter w1{"w1", random_tensor(4, 6, rng), {}}, w2{"w2", random_tensor(6, 3, rng), {}};
  const Tensor x = random_tensor(5, 4, rng);
  auto build = [&](Graph& g) {
    const Var h = ops::relu(ops::matmul(g.constant(x), g.parameter(w1)));
    return ops::softmax_cross_entropy(ops::matmul(h, g.parameter(w2)), {0, 1, 2, 0, 1});
  };
  EXPECT_LT(grad_check(build, w1, 1e-5), 1e-4);
  EXPECT_LT(grad_check(build, w2, 1e-5), 1e-4);
}

TEST(GradCheck, TemporalAveragePooling) {
  Rng rng(12);
  Parameter a{"a", random_tensor(6, 3, rng), {}};
  const Tensor target = random_tensor(2, 3, rng);
  auto build = [&](Graph& g) { return ops::mse(ops::mean_rows(g.parameter(a), 2), g.constant(target)); };
  EXPECT_LT(grad_check(build, a, 1e-5), 1e-4);
}

TEST(GradCheck, FrozenParameterHasExactlyZeroGradient) {
  Rng rng(13);
  Parameter w{"w", random_tensor(3, 3, rng), {}};
  w.zero_grad();
  w.frozen = true;
  Graph g;
  g.backward(ops::sum(ops::matmul(g.parameter(w), g.parameter(w))));
  for (double v : w.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, RestoresParameter) {
  Rng rng(14);
  Parameter w{"w", random_tensor(2, 2, rng), {}};
  const Tensor before = w.value;
  grad_check([&](Graph& g) { return ops::sum(ops::mul(g.parameter(w), g.parameter(w))); }, w, 1e-5);
  EXPECT_EQ(w.value, before);
}

TEST(Optimizer, SgdStep) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Tensor::scalar(1.0));
  p.grad = Tensor::scalar(2.0);
  Optimizer opt({OptimizerKind::Sgd, 0.1});
  opt.step(ps);
  EXPECT_DOUBLE_EQ(p.value.item(), 0.8);
}

TEST(Optimizer, ZeroGradientIsFixedPoint) {
  for (OptimizerKind k : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor::row({1.0, -2.0}));
    Optimizer opt({k, 0.1});
    opt.step(ps);
    EXPECT_EQ(p.value, Tensor::row({1.0, -2.0}));
  }
}

TEST(Optimizer, FrozenParameterUnchanged) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Tensor::scalar(1.0));
  p.grad = Tensor::scalar(5.0);
  p.frozen = true;
  Optimizer opt({OptimizerKind::Adam, 0.1});
  opt.step(ps);
  EXPECT_EQ(p.value.item(), 1.0);
}

TEST(Optimizer, NonFiniteGradientAbortsBeforeAnyUpdate) {
  ParameterSet ps;
  Parameter& a = ps.add("a", Tensor::scalar(1.0));
  Parameter& b = ps.add("b", Tensor::scalar(1.0));
  a.grad = Tensor::scalar(1.0);
  b.grad = Tensor::scalar(std::nan(""));
  Optimizer opt({OptimizerKind::Sgd, 0.1});
  EXPECT_THROW(opt.step(ps), NonFiniteGradient);
  EXPECT_EQ(a.value.item(), 1.0);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Tensor::scalar(0.0));
  p.grad = Tensor::scalar(3.0);
  Optimizer opt({OptimizerKind::Adam, 0.01});
  opt.step(ps);
  EXPECT_NEAR(p.value.item(), -0.01, 1e-9);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_TRUE(a == b);
}

TEST(Rng, StateRoundTrip) {
  Rng a(9);
  a.normal();
  Rng b;
  b.set_state(a.state());
  EXPECT_EQ(a.uniform(), b.uniform());
  EXPECT_EQ(a.normal(), b.normal());
}
