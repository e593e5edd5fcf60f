#include <gtest/gtest.h>

#include <cmath>

#include "mvf/autodiff.hpp"
#include "mvf/oracle.hpp"
#include "mvf/rng.hpp"
#include "mvf/tensor.hpp"

using namespace mvf;

namespace {

Tensor randn(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST(Tensor, ElementwiseAdd) {
  const Tensor s = add(Tensor::row({1, 2}), Tensor::row({3, 4}));
  EXPECT_EQ(s[0], 4.0);
  EXPECT_EQ(s[1], 6.0);
}

TEST(Tensor, IdentityMatmul) {
  Rng rng(1);
  const Tensor a = randn({3, 5}, rng);
  EXPECT_TRUE(matmul(Tensor::identity(3), a).bitwise_equal(a));
}

TEST(Tensor, ReduceSumSq) {
  const auto y = ad::reduce_sum_sq(ad::Var::constant(Tensor::row({3, 4})));
  EXPECT_EQ(y.value().item(), 25.0);
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, RowsAndCols) {
  const Tensor t = Tensor::zeros({4, 3});
  EXPECT_EQ(t.rows(), 4u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.rows_slice(1, 3).rows(), 2u);
}

TEST(Tensor, F32RoundsOpResults) {
  ScopedPrecision guard(Precision::F32);
  const Tensor s = add(Tensor::scalar(1.0), Tensor::scalar(1e-10));
  EXPECT_EQ(s.item(), 1.0);
  EXPECT_EQ(round_to_precision(0.1), static_cast<double>(0.1f));
}

TEST(Tensor, F64KeepsDoubleResolution) {
  const Tensor s = add(Tensor::scalar(1.0), Tensor::scalar(1e-10));
  EXPECT_EQ(s.item(), 1.0 + 1e-10);
}

TEST(Reverse, SquareGradient) {
  const auto g = ad::gradient(
      [](std::span<const ad::Var> in) { return ad::mul(in[0], in[0]); }, std::vector<Tensor>{Tensor::scalar(3)});
  EXPECT_EQ(g[0].item(), 6.0);
}

TEST(Reverse, StopGradKillsOneFactor) {
  const auto g = ad::gradient(
      [](std::span<const ad::Var> in) { return ad::mul(ad::stop_grad(in[0]), in[0]); },
      std::vector<Tensor>{Tensor::scalar(3)});
  EXPECT_EQ(g[0].item(), 3.0);
}

TEST(Reverse, TwoLayerNetMatchesFiniteDifference) {
  Rng rng(7);
  const Tensor w1 = randn({4, 8}, rng), b1 = randn({1, 8}, rng), w2 = randn({8, 1}, rng);
  const Tensor x = randn({5, 4}, rng);
  const ad::VarFn f = [&](std::span<const ad::Var> in) {
    const auto h = ad::tanh(ad::affine(in[0], in[1], in[2]));
    return ad::reduce_sum_sq(ad::matmul(h, in[3]));
  };
  const std::vector<Tensor> point{x, w1, b1, w2};
  const std::vector<Tensor> dir{randn({5, 4}, rng), randn({4, 8}, rng), randn({1, 8}, rng), randn({8, 1}, rng)};
  const auto check = oracle::gradient_check(f, point, dir, 1e-5);
  EXPECT_LT(check.rel_error, 1e-6);
}

TEST(Forward, ProductRule) {
  const ad::VarFn f = [](std::span<const ad::Var> in) { return ad::mul(in[0], in[1]); };
  const auto r = ad::jvp(f, std::vector<Tensor>{Tensor::scalar(2), Tensor::scalar(0.5)},
                         std::vector<Tensor>{Tensor::scalar(1), Tensor::scalar(1)});
  EXPECT_EQ(r.value.item(), 1.0);
  EXPECT_EQ(r.tangent.item(), 2.5);
}

TEST(Forward, StopGradBlocksTangent) {
  const ad::VarFn f = [](std::span<const ad::Var> in) { return ad::mul(ad::stop_grad(in[0]), in[0]); };
  const auto r = ad::jvp(f, std::vector<Tensor>{Tensor::scalar(2)}, std::vector<Tensor>{Tensor::scalar(1)});
  EXPECT_EQ(r.tangent.item(), 2.0);
}

TEST(Forward, SmallNetMatchesFiniteDifference) {
  Rng rng(11);
  const Tensor w = randn({3, 6}, rng), b = randn({1, 6}, rng), w2 = randn({6, 2}, rng);
  const ad::VarFn f = [&](std::span<const ad::Var> in) {
    const auto h = ad::silu(ad::affine(in[0], ad::Var::constant(w), ad::Var::constant(b)));
    return ad::matmul(ad::add(h, ad::sin(h)), ad::Var::constant(w2));
  };
  const std::vector<Tensor> point{randn({4, 3}, rng)};
  const std::vector<Tensor> tangent{randn({4, 3}, rng)};
  EXPECT_LT(oracle::finite_difference_check(f, point, tangent, 1e-5).rel_error, 1e-5);
}

TEST(Forward, PolynomialIsNearlyExact) {
  const ad::VarFn f = [](std::span<const ad::Var> in) {
    return ad::add(ad::mul(ad::mul(in[0], in[0]), in[0]), ad::scale(in[0], 2.0));
  };
  const std::vector<Tensor> point{Tensor::row({0.3, -1.2, 2.0})};
  const std::vector<Tensor> tangent{Tensor::row({1.0, 0.5, -2.0})};
  EXPECT_LT(oracle::finite_difference_check(f, point, tangent, 1e-5).rel_error, 1e-10);
}

TEST(Forward, KinkedOpsRefuseTangents) {
  const std::vector<Tensor> point{Tensor::row({0.5, -0.5})};
  const std::vector<Tensor> tangent{Tensor::row({1.0, 1.0})};
  EXPECT_THROW(ad::jvp([](std::span<const ad::Var> in) { return ad::relu(in[0]); }, point, tangent), ad::JvpError);
  EXPECT_THROW(ad::jvp([](std::span<const ad::Var> in) { return ad::abs(in[0]); }, point, tangent), ad::JvpError);
}

TEST(Forward, ReverseThroughTangentFreeGraph) {
  const auto x = ad::Var::parameter(Tensor::row({1.0, -2.0}));
  const auto y = ad::reduce_sum(ad::relu(x));
  ad::backward(y);
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}
