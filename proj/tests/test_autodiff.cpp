#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attriq/autodiff.hpp"
#include "attriq/grad_check.hpp"
#include "attriq/models.hpp"

using namespace attriq;
using namespace attriq::ad;

TEST(Forward, AddsVectors) {
  Tape t;
  NodeId a = t.input({2}), b = t.input({2});
  NodeId f = t.add(a, b);
  auto v = forward(t, {{a, Tensor::vector({1, 2})}, {b, Tensor::vector({3, 4})}});
  EXPECT_EQ(v[f].data, (std::vector<double>{4, 6}));
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Tape t;
  NodeId x = t.input({2});
  NodeId s = t.softmax(x);
  auto v = forward(t, {{x, Tensor::vector({0, 0})}});
  EXPECT_EQ(v[s].data, (std::vector<double>{0.5, 0.5}));
}

TEST(Forward, DotProduct) {
  Tape t;
  NodeId x = t.input({2});
  NodeId f = t.dot(x, t.constant(Tensor::vector({2, -1})));
  EXPECT_EQ(forward(t, {{x, Tensor::vector({1, 1})}})[f][0], 1.0);
}

TEST(Forward, MissingBindingIsAShapeError) {
  Tape t;
  NodeId x = t.input({2});
  t.sum(x);
  EXPECT_THROW(forward(t, {}), ShapeError);
  EXPECT_THROW(forward(t, {{x, Tensor::vector({1, 2, 3})}}), ShapeError);
}

TEST(Forward, IncompatibleShapesRejectedAtConstruction) {
  Tape t;
  NodeId a = t.input({2}), b = t.input({3});
  EXPECT_THROW(t.add(a, b), ShapeError);
  EXPECT_THROW(t.dot(a, b), ShapeError);
  NodeId m = t.input({3, 2});
  EXPECT_THROW(t.matmul(m, b), ShapeError);
  EXPECT_THROW(t.row_select(a, {2}), ShapeError);
}

TEST(Forward, NonFiniteReportsNode) {
  Tape t;
  NodeId x = t.input({1});
  NodeId l = t.log(x);
  try {
    forward(t, {{x, Tensor::vector({0.0})}});
    FAIL() << "expected a non-finite error";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.node(), l);
  }
}

TEST(Forward, BitIdenticalReplay) {
  std::mt19937_64 rng(3);
  Tape t;
  NodeId x = t.input({4, 3});
  NodeId w = t.constant(random_normal({3, 5}, 1.0, rng));
  NodeId f = t.sum(t.softmax(t.tanh(t.matmul(x, w))));
  Tensor xv = random_normal({4, 3}, 1.0, rng);
  EXPECT_EQ(forward(t, {{x, xv}})[f], forward(t, {{x, xv}})[f]);
}

TEST(Backward, LinearGradient) {
  Tape t;
  NodeId x = t.input({2});
  NodeId f = t.dot(x, t.constant(Tensor::vector({2, -1})));
  auto g = backward(t, forward(t, {{x, Tensor::vector({1, 1})}}), f);
  EXPECT_EQ(g[x].data, (std::vector<double>{2, -1}));
}

TEST(Backward, ProductRule) {
  Tape t;
  NodeId x = t.input({2});
  NodeId f = t.mul(t.pick(x, 0), t.pick(x, 1));
  auto g = backward(t, forward(t, {{x, Tensor::vector({3, 5})}}), f);
  EXPECT_EQ(g[x].data, (std::vector<double>{5, 3}));
}

TEST(Backward, SoftmaxJacobianAtUniformPoint) {
  Tape t;
  NodeId x = t.input({2});
  NodeId f = t.pick(t.softmax(x), 0);
  auto g = backward(t, forward(t, {{x, Tensor::vector({0, 0})}}), f);
  EXPECT_DOUBLE_EQ(g[x][0], 0.25);
  EXPECT_DOUBLE_EQ(g[x][1], -0.25);
}

TEST(Backward, UnreachableInputGetsExactZero) {
  Tape t;
  NodeId x = t.input({3}), y = t.input({2});
  NodeId f = t.sum(t.tanh(x));
  t.sum(y);
  auto g = backward(t, forward(t, {{x, Tensor::vector({1, 2, 3})}, {y, Tensor::vector({4, 5})}}), f);
  EXPECT_EQ(g[y].data, (std::vector<double>{0, 0}));
}

TEST(Backward, NonScalarTargetRejected) {
  Tape t;
  NodeId x = t.input({2});
  NodeId s = t.softmax(x);
  auto v = forward(t, {{x, Tensor::vector({1, 2})}});
  EXPECT_THROW(backward(t, v, s), ShapeError);
  EXPECT_THROW(backward(t, Values{}, s), Error);
}

TEST(Backward, MaxReduceTieGoesToLowestIndex) {
  Tape t;
  NodeId x = t.input({4});
  NodeId f = t.max_reduce(x);
  auto g = backward(t, forward(t, {{x, Tensor::vector({1, 3, 3, 2})}}), f);
  EXPECT_EQ(g[x].data, (std::vector<double>{0, 1, 0, 0}));
}

TEST(Backward, EmbeddingLookupAccumulatesRepeatedRows) {
  Tape t;
  NodeId e = t.input({3, 2});
  NodeId f = t.sum(t.row_select(e, {2, 0, 2}));
  auto g = backward(t, forward(t, {{e, Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})}}), f);
  EXPECT_EQ(g[e].data, (std::vector<double>{1, 1, 0, 0, 2, 2}));
}

TEST(Backward, AffineTapeExact) {
  // F = sum(A x) + 3 (b . x): gradient is the closed form A^T 1 + 3b.
  Tape t;
  NodeId x = t.input({3});
  Tensor a = Tensor::matrix(2, 3, {1.5, -2, 0.25, 4, 0.5, -1});
  Tensor b = Tensor::vector({0.1, 0.2, -0.3});
  NodeId f = t.add(t.sum(t.matmul(t.constant(a), x)), t.mul(t.constant(Tensor::scalar(3)), t.dot(t.constant(b), x)));
  auto g = backward(t, forward(t, {{x, Tensor::vector({7, -3, 2})}}), f);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[x][i], a.at(0, i) + a.at(1, i) + 3 * b[i], 1e-12);
}

TEST(Backward, ConcatAndRowMeanRouteGradients) {
  Tape t;
  NodeId a = t.input({1, 2}), b = t.input({2, 2});
  NodeId f = t.dot(t.mean(t.concat({a, b}), Axis::rows), t.constant(Tensor::vector({3, -6})));
  auto g = backward(t, forward(t, {{a, Tensor::matrix(1, 2, {1, 2})}, {b, Tensor::matrix(2, 2, {3, 4, 5, 6})}}), f);
  EXPECT_EQ(g[a].data, (std::vector<double>{1, -2}));
  EXPECT_EQ(g[b].data, (std::vector<double>{1, -2, 1, -2}));
}

TEST(GradCheck, LinearModelIsExact) {
  Tape t;
  NodeId x = t.input({3});
  NodeId f = t.dot(x, t.constant(Tensor::vector({0.3, -1.7, 2.5})));
  EXPECT_LE(grad_check(t, {{x, Tensor::vector({1, 2, 3})}}, f, 1e-5), 1e-9);
}

TEST(GradCheck, ConstantFunctionIsZero) {
  Tape t;
  NodeId x = t.input({3});
  NodeId f = t.add(t.mul(t.constant(Tensor::scalar(0.0)), t.sum(x)), t.constant(Tensor::scalar(4.0)));
  EXPECT_EQ(grad_check(t, {{x, Tensor::vector({1, 2, 3})}}, f, 1e-5), 0.0);
}

TEST(GradCheck, TanhMlpSeedZero) {
  std::mt19937_64 rng(0);
  Tape t;
  NodeId x = t.input({5});
  NodeId w1 = t.input({5, 7});
  NodeId w2 = t.input({7, 3});
  NodeId f = t.pick(t.softmax(t.matmul(t.tanh(t.matmul(x, w1)), w2)), 1);
  Bindings b = {{x, random_normal({5}, 1.0, rng)}, {w1, random_normal({5, 7}, 0.5, rng)},
                {w2, random_normal({7, 3}, 0.5, rng)}};
  EXPECT_LE(grad_check(t, b, f, 1e-5), 1e-6);
}

TEST(GradCheck, EveryOpKind) {
  std::mt19937_64 rng(11);
  Tape t;
  NodeId x = t.input({3, 4});
  NodeId v = t.input({4});
  NodeId h = t.relu(t.add(t.matmul(x, v), t.constant(Tensor::vector({0.5, 0.5, 0.5}))));
  NodeId s = t.softmax(t.sub(t.mul(t.concat({h, t.tanh(v)}), t.constant(Tensor::scalar(1.3))), t.row_select(v, {0})));
  NodeId f = t.add(t.log(t.sum(t.row_select(s, {1, 2, 6}))), t.max_reduce(t.mean(x, Axis::rows)));
  Bindings b = {{x, random_normal({3, 4}, 1.0, rng)}, {v, random_normal({4}, 1.0, rng)}};
  EXPECT_LE(grad_check(t, b, f, 1e-5), 1e-6);
}

TEST(GradCheck, RejectsNonPositiveEps) {
  Tape t;
  NodeId x = t.input({1});
  NodeId f = t.sum(x);
  EXPECT_THROW(grad_check(t, {{x, Tensor::vector({1})}}, f, 0.0), Error);
}
