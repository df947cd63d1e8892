#pragma once

#include <functional>

#include "shallowdiff/grid.hpp"
#include "shallowdiff/rng.hpp"
#include "shallowdiff/schedule.hpp"

namespace shallowdiff {

/// A grid at diffusion step t.
struct NoisedGrid {
  Grid grid;
  int t = 0;
};

/// Gaussian moments of one reverse transition.
struct ReverseMoment {
  Grid mean;
  double variance = 0.0;
};

/// Predicts the noise component of a noised grid at step t. Any conditioning
/// (score, parameters) is bound into the callable.
using EpsPredictor = std::function<Grid(const Grid& noised, int t)>;

/// Closed-form marginal: sqrt(abar_t) y0 + sqrt(1 - abar_t) eps.
NoisedGrid forward_sample(const Grid& y0, int t, const Grid& eps, const Schedule& schedule);

/// One Markov step q(y_t | y_{t-1}) = N(sqrt(1-beta_t) y_{t-1}, beta_t I).
NoisedGrid single_step_diffuse(const NoisedGrid& previous, const Schedule& schedule, Rng& rng);

/// Mean and variance of q(y_{t-1} | y_t, y0).
ReverseMoment posterior_moment(const NoisedGrid& noised, const Grid& y0, const Schedule& schedule);

/// y_{t-1} = (y_t - (1-alpha_t)/sqrt(1-abar_t) eps_pred) / sqrt(alpha_t) + sigma_t z.
/// At t=1 z must be all zeros.
NoisedGrid reverse_step(const NoisedGrid& noised, const Grid& eps_pred, const Grid& z, const Schedule& schedule);

/// Mean squared error between true and predicted noise.
double simple_loss(const Grid& eps_true, const Grid& eps_pred);

/// beta_t^2 / (2 sigma_t^2 alpha_t (1 - abar_t)), the per-step weight of the
/// variational term. sigma_1^2 is zero under the beta_tilde choice, so t=1
/// falls back to sigma_1^2 = beta_1.
double elbo_weight(int t, const Schedule& schedule);

/// Reverse process started from white noise: exactly T predictor calls.
/// Returns the unclipped t=0 sample.
Grid naive_sample(const EpsPredictor& predictor, std::size_t frames, std::size_t bins, const Schedule& schedule,
                  Rng& rng);

/// Reverse process started from the auxiliary prediction noised to step k:
/// exactly k predictor calls. Returns the unclipped t=0 sample.
Grid shallow_sample(const EpsPredictor& predictor, const Grid& aux_prediction, int k, const Schedule& schedule,
                    Rng& rng);

}  // namespace shallowdiff
