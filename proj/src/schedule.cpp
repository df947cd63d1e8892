#include "shallowdiff/schedule.hpp"

#include <cmath>

namespace shallowdiff {

Schedule Schedule::from_betas(const std::vector<double>& betas) {
  Schedule s;
  s.steps = static_cast<int>(betas.size());
  const auto n = betas.size() + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.one_minus_alpha_bar.assign(n, 0.0);
  s.beta_tilde.assign(n, 0.0);
  s.sigma.assign(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    s.beta[t] = betas[t - 1];
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.one_minus_alpha_bar[t] = s.one_minus_alpha_bar[t - 1] + s.alpha_bar[t - 1] * s.beta[t];
    const double denom = s.one_minus_alpha_bar[t];
    s.beta_tilde[t] = denom > 0.0 ? s.one_minus_alpha_bar[t - 1] / denom * s.beta[t] : 0.0;
    s.sigma[t] = std::sqrt(s.beta_tilde[t]);
  }
  return s;
}

Schedule Schedule::linear(int steps, double beta_first, double beta_last) {
  if (steps < 2) throw ScheduleError("linear schedule needs T >= 2, got " + std::to_string(steps));
  if (!(beta_first > 0.0) || !(beta_first <= beta_last) || !(beta_last < 1.0)) {
    throw ScheduleError("linear schedule needs 0 < beta_1 <= beta_T < 1, got beta_1=" + std::to_string(beta_first) +
                        " beta_T=" + std::to_string(beta_last));
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    betas[static_cast<std::size_t>(t - 1)] =
        beta_first + static_cast<double>(t - 1) / static_cast<double>(steps - 1) * (beta_last - beta_first);
  }
  // Pin the endpoints against rounding in the interpolation.
  betas.front() = beta_first;
  betas.back() = beta_last;
  Schedule s = from_betas(betas);
  validate(s);
  return s;
}

void Schedule::check_step(int t, int lo) const {
  if (t < lo || t > steps) {
    throw std::out_of_range("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(steps) + "]");
  }
}

void validate(const Schedule& s) {
  auto fail = [](const std::string& what, int t) {
    throw ScheduleError("schedule invariant violated: " + what + " at t=" + std::to_string(t));
  };
  if (s.steps < 1) throw ScheduleError("schedule invariant violated: T must be positive");
  const auto n = static_cast<std::size_t>(s.steps) + 1;
  if (s.beta.size() != n || s.alpha.size() != n || s.alpha_bar.size() != n || s.one_minus_alpha_bar.size() != n ||
      s.beta_tilde.size() != n || s.sigma.size() != n) {
    throw ScheduleError("schedule invariant violated: table lengths must be T+1");
  }
  if (s.alpha_bar[0] != 1.0) fail("alpha_bar_0 == 1 convention", 0);
  for (int t = 1; t <= s.steps; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const double b = s.beta[i];
    if (!std::isfinite(b) || !(b > 0.0) || !(b < 1.0)) fail("0 < beta < 1", t);
    if (t > 1 && b < s.beta[i - 1]) fail("beta nondecreasing", t);
    if (std::fabs(s.alpha[i] - (1.0 - b)) > 1e-15) fail("alpha = 1 - beta", t);
    if (std::fabs(s.alpha_bar[i] - s.alpha_bar[i - 1] * s.alpha[i]) > 1e-15 * s.alpha_bar[i - 1]) {
      fail("alpha_bar = running product of alpha", t);
    }
    if (!(s.alpha_bar[i] < s.alpha_bar[i - 1])) fail("alpha_bar strictly decreasing", t);
    if (std::fabs(s.one_minus_alpha_bar[i] - (1.0 - s.alpha_bar[i])) > 1e-14) fail("one_minus_alpha_bar", t);
    const double bt = (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]) * b;
    if (std::fabs(s.beta_tilde[i] - bt) > 1e-15 + 1e-12 * bt) fail("beta_tilde definition", t);
    if (s.beta_tilde[i] < 0.0 || s.beta_tilde[i] > b) fail("0 <= beta_tilde <= beta", t);
    if (std::fabs(s.sigma[i] * s.sigma[i] - s.beta_tilde[i]) > 1e-15 + 1e-12 * s.beta_tilde[i]) {
      fail("sigma^2 = beta_tilde", t);
    }
  }
  if (s.beta_tilde[1] != 0.0) fail("beta_tilde_1 == 0", 1);
}

}  // namespace shallowdiff
