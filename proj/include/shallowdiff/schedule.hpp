#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace shallowdiff {

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Variance schedule and its derived per-step constants.
///
/// Every table has T+1 entries indexed by the step t. Index 0 holds the
/// conventions beta=0, alpha=1, alpha_bar=1, beta_tilde=0, sigma=0 so that
/// noising at t=0 is the identity.
struct Schedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  /// 1 - alpha_bar, accumulated as sum of alpha_bar_{t-1} beta_t so small
  /// values near t=1 keep full relative precision.
  std::vector<double> one_minus_alpha_bar;
  std::vector<double> beta_tilde;
  std::vector<double> sigma;

  /// Derives alpha, alpha_bar, beta_tilde and sigma from beta_1..beta_T.
  /// Does not validate; see validate().
  static Schedule from_betas(const std::vector<double>& betas);

  /// beta_t = beta_1 + (t-1)/(T-1) * (beta_T - beta_1), endpoints inclusive.
  static Schedule linear(int steps, double beta_first, double beta_last);

  void check_step(int t, int lo = 0) const;
};

/// Throws ScheduleError naming the first violated invariant and its step.
void validate(const Schedule& schedule);

}  // namespace shallowdiff
