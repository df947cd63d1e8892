#include <gtest/gtest.h>

#include <cmath>

#include "shallowdiff/diffusion.hpp"

namespace sd = shallowdiff;
using sd::Grid;

namespace {

const sd::Schedule& default_schedule() {
  static const sd::Schedule s = sd::Schedule::linear(100, 1e-4, 0.06);
  return s;
}

Grid random_grid(std::size_t f, std::size_t b, std::uint64_t seed) {
  sd::Rng rng(seed);
  return Grid::standard_normal(f, b, rng);
}

double mean_of(const Grid& g) {
  double s = 0;
  for (double v : g.values()) s += v;
  return s / static_cast<double>(g.size());
}

double var_of(const Grid& g) {
  const double m = mean_of(g);
  double s = 0;
  for (double v : g.values()) s += (v - m) * (v - m);
  return s / static_cast<double>(g.size() - 1);
}

TEST(ForwardSample, IdentityAtStepZero) {
  const Grid y0 = random_grid(3, 4, 1), eps = random_grid(3, 4, 2);
  EXPECT_EQ(sd::forward_sample(y0, 0, eps, default_schedule()).grid, y0);
}

TEST(ForwardSample, ZeroNoiseScalesBySqrtAlphaBar) {
  const auto& s = default_schedule();
  const Grid y0 = random_grid(3, 4, 1);
  const auto out = sd::forward_sample(y0, 37, Grid(3, 4), s);
  EXPECT_EQ(out.t, 37);
  for (std::size_t i = 0; i < y0.size(); ++i) EXPECT_DOUBLE_EQ(out.grid[i], std::sqrt(s.alpha_bar[37]) * y0[i]);
}

TEST(ForwardSample, Errors) {
  const Grid y0(2, 2);
  EXPECT_THROW(sd::forward_sample(y0, 101, Grid(2, 2), default_schedule()), std::out_of_range);
  EXPECT_THROW(sd::forward_sample(y0, 3, Grid(2, 3), default_schedule()), std::invalid_argument);
}

TEST(ForwardSample, MonteCarloMeanAtDeepEnd) {
  const auto& s = default_schedule();
  const std::size_t n = 100000;
  const Grid y0(1, n, 1.0);
  const Grid out = sd::forward_sample(y0, 100, random_grid(1, n, 3), s).grid;
  const double se = std::sqrt(1 - s.alpha_bar[100]) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::fabs(mean_of(out) - std::sqrt(s.alpha_bar[100])), 4 * se);
}

TEST(SingleStep, IteratedMatchesClosedFormAtTwenty) {
  const auto& s = default_schedule();
  const std::size_t n = 100000;
  const double y = 0.8;
  sd::Rng rng(5);
  sd::NoisedGrid state{Grid(1, n, y), 0};
  for (int i = 0; i < 20; ++i) state = sd::single_step_diffuse(state, s, rng);
  EXPECT_EQ(state.t, 20);
  const double mean = std::sqrt(s.alpha_bar[20]) * y, var = 1 - s.alpha_bar[20];
  EXPECT_LT(std::fabs(mean_of(state.grid) - mean), 4 * std::sqrt(var / n));
  EXPECT_LT(std::fabs(var_of(state.grid) - var), 4 * var * std::sqrt(2.0 / (n - 1)));
}

TEST(SingleStep, OneStepVarianceIsBeta) {
  const auto& s = default_schedule();
  const std::size_t n = 100000;
  sd::Rng rng(6);
  const auto out = sd::single_step_diffuse({Grid(1, n, 0.3), 49}, s, rng);
  EXPECT_EQ(out.t, 50);
  const double beta = s.beta[50];
  EXPECT_LT(std::fabs(var_of(out.grid) - beta), 4 * beta * std::sqrt(2.0 / (n - 1)));
}

TEST(SingleStep, ZeroBetaKeepsValues) {
  const auto s = sd::Schedule::from_betas({0.0, 0.0, 0.0});
  sd::Rng rng(7);
  const Grid y = random_grid(2, 3, 8);
  EXPECT_EQ(sd::single_step_diffuse({y, 1}, s, rng).grid, y);
}

TEST(SingleStep, RefusesToStepPastT) {
  sd::Rng rng(1);
  EXPECT_THROW(sd::single_step_diffuse({Grid(1, 1), 100}, default_schedule(), rng), std::out_of_range);
}

TEST(Posterior, StepOneMeanIsY0) {
  const Grid y0 = random_grid(2, 5, 9), yt = random_grid(2, 5, 10);
  const auto m = sd::posterior_moment({yt, 1}, y0, default_schedule());
  for (std::size_t i = 0; i < y0.size(); ++i) EXPECT_NEAR(m.mean[i], y0[i], 1e-15);
  EXPECT_EQ(m.variance, 0.0);
}

TEST(Posterior, ZeroInputsGiveZeroMean) {
  const auto m = sd::posterior_moment({Grid(2, 2), 40}, Grid(2, 2), default_schedule());
  EXPECT_EQ(m.mean, Grid(2, 2));
  EXPECT_EQ(m.variance, default_schedule().beta_tilde[40]);
}

TEST(Posterior, RejectsStepZero) {
  EXPECT_THROW(sd::posterior_moment({Grid(1, 1), 0}, Grid(1, 1), default_schedule()), std::out_of_range);
}

TEST(ReverseStep, TrueNoiseReproducesPosteriorMeanAtEveryStep) {
  const auto& s = default_schedule();
  const Grid y0 = random_grid(3, 4, 11);
  for (int t = 1; t <= 100; ++t) {
    const Grid eps = random_grid(3, 4, 100 + static_cast<std::uint64_t>(t));
    const auto yt = sd::forward_sample(y0, t, eps, s);
    const auto back = sd::reverse_step(yt, eps, Grid(3, 4), s);
    const auto post = sd::posterior_moment(yt, y0, s);
    EXPECT_EQ(back.t, t - 1);
    for (std::size_t i = 0; i < y0.size(); ++i) ASSERT_NEAR(back.grid[i], post.mean[i], 1e-12) << "t=" << t;
  }
}

TEST(ReverseStep, RecoversY0AtStepOne) {
  const auto& s = default_schedule();
  const Grid y0 = random_grid(4, 4, 12), eps = random_grid(4, 4, 13);
  const auto back = sd::reverse_step(sd::forward_sample(y0, 1, eps, s), eps, Grid(4, 4), s);
  for (std::size_t i = 0; i < y0.size(); ++i) EXPECT_NEAR(back.grid[i], y0[i], 1e-12);
}

TEST(ReverseStep, ZeroPredictionRescales) {
  const auto& s = default_schedule();
  const Grid yt = random_grid(2, 2, 14);
  const auto back = sd::reverse_step({yt, 30}, Grid(2, 2), Grid(2, 2), s);
  for (std::size_t i = 0; i < yt.size(); ++i) EXPECT_DOUBLE_EQ(back.grid[i], yt[i] / std::sqrt(s.alpha[30]));
}

TEST(ReverseStep, NonzeroNoiseAtStepOneIsRejected) {
  EXPECT_THROW(sd::reverse_step({Grid(1, 2), 1}, Grid(1, 2), Grid(1, 2, 0.5), default_schedule()),
               std::invalid_argument);
  EXPECT_THROW(sd::reverse_step({Grid(1, 2), 0}, Grid(1, 2), Grid(1, 2), default_schedule()), std::out_of_range);
}

TEST(SimpleLoss, Examples) {
  const Grid a = random_grid(3, 3, 15), b = random_grid(3, 3, 16);
  EXPECT_EQ(sd::simple_loss(a, a), 0.0);
  EXPECT_EQ(sd::simple_loss(Grid(2, 2), Grid(2, 2, 1.0)), 1.0);
  double brute = 0;
  for (std::size_t i = 0; i < a.size(); ++i) brute += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(sd::simple_loss(a, b), brute / 9.0, 1e-12);
  EXPECT_THROW(sd::simple_loss(Grid(2, 2), Grid(2, 3)), std::invalid_argument);
}

TEST(ElboWeight, PositiveAndFinite) {
  for (int t = 1; t <= 100; ++t) {
    const double w = sd::elbo_weight(t, default_schedule());
    EXPECT_TRUE(std::isfinite(w) && w > 0) << "t=" << t;
  }
}

TEST(Samplers, CallCounts) {
  const auto& s = default_schedule();
  int calls = 0;
  const sd::EpsPredictor zero = [&calls](const Grid& g, int) {
    ++calls;
    return Grid(g.frames(), g.bins());
  };
  sd::Rng rng(17);
  sd::naive_sample(zero, 2, 3, s, rng);
  EXPECT_EQ(calls, 100);
  for (int k : {1, 54, 100}) {
    calls = 0;
    sd::shallow_sample(zero, Grid(2, 3), k, s, rng);
    EXPECT_EQ(calls, k);
  }
  EXPECT_THROW(sd::shallow_sample(zero, Grid(2, 3), 0, s, rng), std::out_of_range);
  EXPECT_THROW(sd::shallow_sample(zero, Grid(2, 3), 101, s, rng), std::out_of_range);
}

TEST(Samplers, StepsVisitedInDescendingOrder) {
  std::vector<int> seen;
  const sd::EpsPredictor rec = [&seen](const Grid& g, int t) {
    seen.push_back(t);
    return Grid(g.frames(), g.bins());
  };
  sd::Rng rng(18);
  sd::shallow_sample(rec, Grid(1, 1), 5, default_schedule(), rng);
  EXPECT_EQ(seen, (std::vector<int>{5, 4, 3, 2, 1}));
}

TEST(Samplers, SingleStepScheduleHasNoNoise) {
  const auto s = sd::Schedule::from_betas({0.02});
  const sd::EpsPredictor zero = [](const Grid& g, int) { return Grid(g.frames(), g.bins()); };
  sd::Rng a(19), b(19);
  // With T=1 the only step uses z=0, so the output is the start noise rescaled.
  const Grid out = sd::naive_sample(zero, 1, 4, s, a);
  const Grid start = Grid::standard_normal(1, 4, b);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], start[i] / std::sqrt(s.alpha[1]));
}

TEST(Samplers, ShallowWithPerfectPredictorAtStepOneReturnsAux) {
  const auto& s = default_schedule();
  const Grid aux = random_grid(3, 3, 20);
  // Recover the injected noise from the state: eps = (x - sqrt(abar) aux) / sqrt(1 - abar).
  const sd::EpsPredictor perfect = [&](const Grid& x, int t) {
    Grid eps(x.frames(), x.bins());
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - std::sqrt(ab) * aux[i]) / std::sqrt(1 - ab);
    return eps;
  };
  sd::Rng rng(21);
  const Grid out = sd::shallow_sample(perfect, aux, 1, s, rng);
  for (std::size_t i = 0; i < aux.size(); ++i) EXPECT_NEAR(out[i], aux[i], 1e-12);
}

TEST(Samplers, DeterministicForFixedSeed) {
  const sd::EpsPredictor half = [](const Grid& g, int) {
    Grid out = g;
    for (auto& v : out.values()) v *= 0.5;
    return out;
  };
  sd::Rng a(22), b(22);
  EXPECT_EQ(sd::naive_sample(half, 2, 2, default_schedule(), a), sd::naive_sample(half, 2, 2, default_schedule(), b));
}

}  // namespace
