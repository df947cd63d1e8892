#include "shallowdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace shallowdiff {

namespace {

std::size_t idx(int t) { return static_cast<std::size_t>(t); }

Grid run_reverse(const EpsPredictor& predictor, NoisedGrid state, const Schedule& schedule, Rng& rng) {
  const std::size_t frames = state.grid.frames(), bins = state.grid.bins();
  while (state.t > 0) {
    const Grid eps = predictor(state.grid, state.t);
    const Grid z = state.t > 1 ? Grid::standard_normal(frames, bins, rng) : Grid(frames, bins);
    state = reverse_step(state, eps, z, schedule);
  }
  return std::move(state.grid);
}

}  // namespace

NoisedGrid forward_sample(const Grid& y0, int t, const Grid& eps, const Schedule& schedule) {
  schedule.check_step(t);
  require_same_shape(y0, eps, "forward_sample");
  const double signal = std::sqrt(schedule.alpha_bar[idx(t)]);
  const double noise = std::sqrt(schedule.one_minus_alpha_bar[idx(t)]);
  Grid out(y0.frames(), y0.bins());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * y0[i] + noise * eps[i];
  return {std::move(out), t};
}

NoisedGrid single_step_diffuse(const NoisedGrid& previous, const Schedule& schedule, Rng& rng) {
  schedule.check_step(previous.t);
  if (previous.t >= schedule.steps) throw std::out_of_range("single_step_diffuse: already at t=T");
  const int t = previous.t + 1;
  const double keep = std::sqrt(1.0 - schedule.beta[idx(t)]);
  const double spread = std::sqrt(schedule.beta[idx(t)]);
  Grid out(previous.grid.frames(), previous.grid.bins());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * previous.grid[i] + spread * rng.normal();
  return {std::move(out), t};
}

ReverseMoment posterior_moment(const NoisedGrid& noised, const Grid& y0, const Schedule& schedule) {
  const int t = noised.t;
  schedule.check_step(t, 1);
  require_same_shape(noised.grid, y0, "posterior_moment");
  const double abar_prev = schedule.alpha_bar[idx(t - 1)];
  const double c0 = std::sqrt(abar_prev) * schedule.beta[idx(t)] / schedule.one_minus_alpha_bar[idx(t)];
  const double ct =
      std::sqrt(schedule.alpha[idx(t)]) * schedule.one_minus_alpha_bar[idx(t - 1)] / schedule.one_minus_alpha_bar[idx(t)];
  Grid mean(y0.frames(), y0.bins());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = c0 * y0[i] + ct * noised.grid[i];
  return {std::move(mean), schedule.beta_tilde[idx(t)]};
}

NoisedGrid reverse_step(const NoisedGrid& noised, const Grid& eps_pred, const Grid& z, const Schedule& schedule) {
  const int t = noised.t;
  schedule.check_step(t, 1);
  require_same_shape(noised.grid, eps_pred, "reverse_step");
  require_same_shape(noised.grid, z, "reverse_step");
  if (t == 1) {
    for (double v : z.values())
      if (v != 0.0) throw std::invalid_argument("reverse_step: z must be zero at t=1");
  }
  const double alpha = schedule.alpha[idx(t)];
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double eps_coef = (1.0 - alpha) / std::sqrt(schedule.one_minus_alpha_bar[idx(t)]);
  const double sigma = schedule.sigma[idx(t)];
  Grid out(noised.grid.frames(), noised.grid.bins());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (noised.grid[i] - eps_coef * eps_pred[i]) + sigma * z[i];
  }
  return {std::move(out), t - 1};
}

double simple_loss(const Grid& eps_true, const Grid& eps_pred) { return mean_squared_distance(eps_true, eps_pred); }

double elbo_weight(int t, const Schedule& schedule) {
  schedule.check_step(t, 1);
  const auto i = idx(t);
  const double var = t == 1 ? schedule.beta[i] : schedule.beta_tilde[i];
  const double b = schedule.beta[i];
  return b * b / (2.0 * var * schedule.alpha[i] * schedule.one_minus_alpha_bar[i]);
}

Grid naive_sample(const EpsPredictor& predictor, std::size_t frames, std::size_t bins, const Schedule& schedule,
                  Rng& rng) {
  NoisedGrid start{Grid::standard_normal(frames, bins, rng), schedule.steps};
  return run_reverse(predictor, std::move(start), schedule, rng);
}

Grid shallow_sample(const EpsPredictor& predictor, const Grid& aux_prediction, int k, const Schedule& schedule,
                    Rng& rng) {
  if (k < 1 || k > schedule.steps) {
    throw std::out_of_range("shallow_sample: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(schedule.steps) + "]");
  }
  const Grid eps = Grid::standard_normal(aux_prediction.frames(), aux_prediction.bins(), rng);
  return run_reverse(predictor, forward_sample(aux_prediction, k, eps, schedule), schedule, rng);
}

}  // namespace shallowdiff
