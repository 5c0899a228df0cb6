#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "tpt/error.hpp"
#include "tpt/gradcheck.hpp"
#include "tpt/ops.hpp"
#include "tpt/tensor.hpp"

using namespace tpt;

TEST(Randn, SameSeedSameBuffer) {
  Rng a(7), b(7);
  const auto x = randn<float>({4}, 1.0, a);
  const auto y = randn<float>({4}, 1.0, b);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(Randn, SampleMeanNearZero) {
  Rng rng(11);
  const auto x = randn<double>({10000}, 1.0, rng);
  const double m = std::accumulate(x.data().begin(), x.data().end(), 0.0) / 10000.0;
  EXPECT_LT(std::abs(m), 0.05);
}

TEST(Randn, NonPositiveStdThrows) {
  Rng rng(1);
  EXPECT_THROW(randn<float>({3}, 0.0, rng), DomainError);
  EXPECT_THROW(randn<float>({3}, -1.0, rng), DomainError);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Matmul, IdentityAndSmallProduct) {
  const Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor<double> x({3, 1}, {4, -2, 7});
  const auto y = matmul(eye, x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{4, -2, 7}));

  const Tensor<double> a({2, 2}, {1, 2, 3, 4});
  const Tensor<double> ones({2, 1}, {1, 1});
  const auto c = matmul(a, ones);
  EXPECT_DOUBLE_EQ(c.data()[0], 3.0);
  EXPECT_DOUBLE_EQ(c.data()[1], 7.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({2, 3})), ShapeError);
}

TEST(Elementwise, BroadcastMismatchThrows) {
  EXPECT_THROW(add(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({4})), ShapeError);
}

TEST(Elementwise, SiluMatchesScalarOracle) {
  const Tensor<double> x({2}, {0.0, 1.0});
  const auto y = silu(x);
  EXPECT_DOUBLE_EQ(y.data()[0], 0.0);
  EXPECT_NEAR(y.data()[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(y.data()[1], 0.7311, 1e-4);
}

TEST(Elementwise, DomainErrors) {
  EXPECT_THROW(div(Tensor<float>::full({2}, 1.0f), Tensor<float>::zeros({2})), DomainError);
  EXPECT_THROW(log(Tensor<float>::zeros({1})), DomainError);
  EXPECT_THROW(log(Tensor<float>::full({1}, -1.0f)), DomainError);
}

TEST(Softmax, UniformAndCausal) {
  const auto p = softmax_lastdim(Tensor<double>::zeros({1, 4}), false);
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);

  Rng rng(2);
  const auto scores = randn<double>({3, 3}, 1.0, rng);
  const auto c = softmax_lastdim(scores, true);
  EXPECT_DOUBLE_EQ(c.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(c.data()[1], 0.0);
  EXPECT_DOUBLE_EQ(c.data()[2], 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += c.data()[r * 3 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
  const auto logits = Tensor<double>::zeros({1, 2, 10});
  const std::vector<TokenId> tgt = {3, 7};
  EXPECT_NEAR(cross_entropy(logits, tgt).item(), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  std::vector<double> v(5, 0.0);
  v[2] = 50.0;
  const Tensor<double> logits({1, 1, 5}, v);
  const std::vector<TokenId> tgt = {2};
  EXPECT_LT(cross_entropy(logits, tgt).item(), 1e-15);
}

TEST(CrossEntropy, IgnoresPadAndRejectsAllIgnored) {
  Rng rng(4);
  const auto logits = randn<double>({1, 3, 6}, 1.0, rng);
  const std::vector<TokenId> some = {0, 2, 0};
  const auto row = Tensor<double>({1, 1, 6}, std::vector<double>(logits.data().begin() + 6,
                                                                 logits.data().begin() + 12));
  const std::vector<TokenId> only = {2};
  EXPECT_NEAR(cross_entropy(logits, some).item(), cross_entropy(row, only).item(), 1e-14);
  const std::vector<TokenId> none = {0, 0, 0};
  EXPECT_THROW(cross_entropy(logits, none), DomainError);
}

TEST(Backward, SumGivesOnes) {
  Tensor<double> x({3}, {1, -2, 5}, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, HalfSquareGivesX) {
  Tensor<double> x({3}, {1, -2, 5}, true);
  scale(sum(square(x)), 0.5).backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i]);
}

TEST(Backward, NonScalarThrows) {
  Tensor<double> x({3}, {1, 2, 3}, true);
  EXPECT_THROW(square(x).backward(), ShapeError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // y = x*x + x: dy/dx = 2x + 1.
  Tensor<double> x({2}, {3, -1}, true);
  sum(add(mul(x, x), x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -1.0);
}

TEST(NoGrad, DisablesRecording) {
  Tensor<double> x({2}, {1, 2}, true);
  NoGradGuard guard;
  const auto y = square(x);
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

TEST(CheckedMode, NonFiniteOutputThrows) {
  CheckedModeGuard guard(true);
  const Tensor<float> big({1}, {100.0f});
  EXPECT_THROW(exp(big), NumericError);
}

TEST(Gradcheck, ComposedOpsAgreeWithFiniteDifferences) {
  Rng rng(21);
  auto a = randn<double>({3, 4}, 1.0, rng, true);
  auto b = randn<double>({4, 5}, 1.0, rng, true);
  const std::vector<TokenId> tgt = {1, 2, 4};
  const auto loss = [&] {
    const auto h = silu(matmul(a, b));
    return add(cross_entropy(reshape(h, {1, 3, 5}), tgt), mean(square(sigmoid(h))));
  };
  gradcheck::Options opt;
  opt.per_leaf = 20;
  const auto rep = gradcheck::check(loss, {{"a", a}, {"b", b}}, rng, opt);
  EXPECT_EQ(rep.count(), 32u);
  EXPECT_EQ(rep.failures(1e-6), 0u) << rep.worst << " " << rep.max_rel_err;
}

TEST(Gradcheck, ReductionsAndPermute) {
  Rng rng(5);
  auto x = randn<double>({2, 3, 4}, 1.0, rng, true);
  const auto loss = [&] {
    const auto p = permute(x, {2, 0, 1});
    const auto s = softmax_lastdim(reshape(p, {4, 2, 3}), true);
    return add(sum(mul(s, cos(p))), mean(sqrt(add_scalar(square(mean_lastdim(x, true)), 1.0))));
  };
  gradcheck::Options opt;
  opt.per_leaf = 24;
  const auto rep = gradcheck::check(loss, {{"x", x}}, rng, opt);
  EXPECT_EQ(rep.failures(1e-6), 0u) << rep.worst << " " << rep.max_rel_err;
}
