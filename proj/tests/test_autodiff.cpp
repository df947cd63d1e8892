#include <gtest/gtest.h>

#include <cmath>

#include "shallowdiff/autodiff.hpp"
#include "support/op_cases.hpp"

namespace sd = shallowdiff;
using sd::Array;
using sd::Shape;
using sd::ad::Var;

namespace {

class OpGradient : public ::testing::TestWithParam<sd::testing::OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto report = GetParam().run();
  EXPECT_GT(report.checked, 0u);
  EXPECT_LT(report.max_rel_error, 1e-4) << "worst element " << report.worst;
}

INSTANTIATE_TEST_SUITE_P(Ops, OpGradient, ::testing::ValuesIn(sd::testing::op_cases()),
                         [](const auto& info) { return info.param.name; });

INSTANTIATE_TEST_SUITE_P(Models, OpGradient, ::testing::ValuesIn(sd::testing::model_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Autodiff, ParametersStartWithZeroGrad) {
  Var p = Var::parameter(Array({2, 2}, 3.0));
  EXPECT_EQ(p.grad(), Array({2, 2}, 0.0));
  EXPECT_TRUE(p.requires_grad());
  EXPECT_FALSE(Var::constant(Array({1}, 1.0)).requires_grad());
}

TEST(Autodiff, SecondBackwardThrows) {
  Var p = Var::parameter(Array({3}, 1.0));
  Var loss = sd::ad::sum(sd::ad::mul(p, p));
  sd::ad::backward(loss);
  EXPECT_THROW(sd::ad::backward(loss), std::logic_error);
}

TEST(Autodiff, GradientsAccumulateAcrossGraphsUntilZeroed) {
  Var p = Var::parameter(Array({2}, 1.0));
  sd::ad::backward(sd::ad::sum(sd::ad::scale(p, 2.0)));
  sd::ad::backward(sd::ad::sum(sd::ad::scale(p, 3.0)));
  EXPECT_DOUBLE_EQ(p.grad()[0], 5.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad()[1], 0.0);
}

TEST(Autodiff, FanOutSumsContributions) {
  Var p = Var::parameter(Array::scalar(2.0));
  // d/dp (p*p + p) = 2p + 1
  sd::ad::backward(sd::ad::add(sd::ad::mul(p, p), p));
  EXPECT_DOUBLE_EQ(p.grad().item(), 5.0);
}

TEST(Autodiff, ConstantsFoldWithoutGraph) {
  Var a = Var::constant(Array({2}, 1.0));
  Var b = sd::ad::tanh(sd::ad::add(a, a));
  EXPECT_FALSE(b.requires_grad());
  EXPECT_NEAR(b.value()[0], std::tanh(2.0), 1e-15);
}

TEST(Autodiff, BackwardNeedsScalar) {
  Var p = Var::parameter(Array({2}, 1.0));
  EXPECT_THROW(sd::ad::backward(sd::ad::scale(p, 2.0)), std::invalid_argument);
}

TEST(Autodiff, ShapeMismatchNamesBothShapes) {
  Var a = Var::parameter(Array({2, 3}));
  Var b = Var::parameter(Array({3, 2}));
  try {
    sd::ad::add(a, b);
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos);
    EXPECT_NE(msg.find("3"), std::string::npos);
  }
}

TEST(Autodiff, MatmulValue) {
  Var a = Var::constant(Array({2, 2}, {1, 2, 3, 4}));
  Var b = Var::constant(Array({2, 1}, {5, 6}));
  EXPECT_EQ(sd::ad::matmul(a, b).value(), Array({2, 1}, {17, 39}));
}

TEST(Autodiff, ConvIsSamePaddedCrossCorrelation) {
  // One channel, kernel [1, 2, 3] over [1, 0, 0, 2]: out[i] = x[i-1] + 2 x[i] + 3 x[i+1].
  Var x = Var::constant(Array({1, 4}, {1, 0, 0, 2}));
  Var w = Var::constant(Array({1, 1, 3}, {1, 2, 3}));
  EXPECT_EQ(sd::ad::conv1d(x, w).value(), Array({1, 4}, {2, 1, 6, 4}));
  // Dilation 2 reads x[i-2] and x[i+2].
  EXPECT_EQ(sd::ad::conv1d(x, w, 2).value(), Array({1, 4}, {2, 6, 1, 4}));
  EXPECT_THROW(sd::ad::conv1d(x, Var::constant(Array({1, 1, 2}))), std::invalid_argument);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  sd::Rng rng(1);
  const Array y = sd::ad::softmax_rows(Var::constant(sd::testing::random_array({4, 6}, rng, 5.0))).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += y.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(Autodiff, BceIsStableForLargeLogits) {
  const double big = sd::ad::bce_with_logits(Var::constant(Array::scalar(800.0)), 0.0).value().item();
  EXPECT_NEAR(big, 800.0, 1e-9);
  const double small = sd::ad::bce_with_logits(Var::constant(Array::scalar(800.0)), 1.0).value().item();
  EXPECT_GE(small, 0.0);
  EXPECT_LT(small, 1e-300 + 1e-12);
}

}  // namespace
