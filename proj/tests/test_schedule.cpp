#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "shallowdiff/schedule.hpp"

namespace sd = shallowdiff;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

Big alpha_bar_oracle(int steps, double b1, double bT, int t) {
  Big prod = 1;
  for (int s = 1; s <= t; ++s) {
    const Big beta = Big(b1) + Big(s - 1) / Big(steps - 1) * (Big(bT) - Big(b1));
    prod *= 1 - beta;
  }
  return prod;
}

TEST(Schedule, LinearEndpointsAreExact) {
  const auto s = sd::Schedule::linear(100, 1e-4, 0.06);
  EXPECT_EQ(s.beta[1], 1e-4);
  EXPECT_EQ(s.beta[100], 0.06);
  EXPECT_EQ(s.beta.size(), 101u);
}

TEST(Schedule, AlphaBarMatchesExtendedPrecisionProduct) {
  const auto s = sd::Schedule::linear(100, 1e-4, 0.06);
  for (int t : {1, 2, 10, 50, 99, 100}) {
    const double oracle = static_cast<double>(alpha_bar_oracle(100, 1e-4, 0.06, t));
    EXPECT_LT(std::fabs(s.alpha_bar[static_cast<std::size_t>(t)] - oracle) / oracle, 1e-12) << "t=" << t;
  }
}

TEST(Schedule, DerivedTablesObeyInvariants) {
  const auto s = sd::Schedule::linear(100, 1e-4, 0.06);
  EXPECT_NO_THROW(sd::validate(s));
  EXPECT_EQ(s.alpha_bar[0], 1.0);
  EXPECT_EQ(s.beta_tilde[1], 0.0);
  for (int t = 1; t <= 100; ++t) {
    const auto i = static_cast<std::size_t>(t);
    EXPECT_LT(s.alpha_bar[i], s.alpha_bar[i - 1]);
    EXPECT_GE(s.beta[i], s.beta[i - 1]);
    EXPECT_DOUBLE_EQ(s.alpha[i], 1.0 - s.beta[i]);
    EXPECT_NEAR(s.sigma[i] * s.sigma[i], s.beta_tilde[i], 1e-15 * s.beta_tilde[i]);
    EXPECT_NEAR(s.one_minus_alpha_bar[i], 1.0 - s.alpha_bar[i], 1e-15);
    EXPECT_LE(s.beta_tilde[i], s.beta[i]);
  }
}

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(sd::Schedule::linear(1, 1e-4, 0.06), sd::ScheduleError);
  EXPECT_THROW(sd::Schedule::linear(10, 0.0, 0.06), sd::ScheduleError);
  EXPECT_THROW(sd::Schedule::linear(10, 0.1, 0.05), sd::ScheduleError);
  EXPECT_THROW(sd::Schedule::linear(10, 1e-4, 1.0), sd::ScheduleError);
}

TEST(Schedule, ValidateNamesTheViolatedStep) {
  auto s = sd::Schedule::from_betas({0.01, 0.005, 0.02});
  try {
    sd::validate(s);
    FAIL() << "decreasing betas accepted";
  } catch (const sd::ScheduleError& e) {
    EXPECT_NE(std::string(e.what()).find("t=2"), std::string::npos) << e.what();
  }
}

TEST(Schedule, ZeroBetaIsIdentityScaling) {
  const auto s = sd::Schedule::from_betas({0.0, 0.0});
  EXPECT_EQ(s.alpha_bar[2], 1.0);
  EXPECT_EQ(s.alpha[1], 1.0);
}

TEST(Schedule, CheckStepBounds) {
  const auto s = sd::Schedule::linear(10, 1e-4, 0.06);
  EXPECT_NO_THROW(s.check_step(0));
  EXPECT_NO_THROW(s.check_step(10));
  EXPECT_THROW(s.check_step(11), std::out_of_range);
  EXPECT_THROW(s.check_step(0, 1), std::out_of_range);
}

}  // namespace
