#include "shallowdiff/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "shallowdiff/diffusion.hpp"
#include "shallowdiff/errors.hpp"
#include "shallowdiff/optim.hpp"

namespace shallowdiff {

namespace {

std::size_t idx(int t) { return static_cast<std::size_t>(t); }

void require_nonempty(std::span<const GridPair> dataset, const char* what) {
  if (dataset.empty()) throw std::invalid_argument(std::string(what) + ": empty dataset");
}

}  // namespace

double kl_trajectory(const Grid& m0, const Grid& m0_tilde, int t, const Schedule& schedule) {
  if (t == 0) throw std::invalid_argument("kl_trajectory undefined at t=0 (zero variance)");
  schedule.check_step(t, 1);
  const double abar = schedule.alpha_bar[idx(t)];
  return abar / (2.0 * schedule.one_minus_alpha_bar[idx(t)]) * squared_distance(m0_tilde, m0);
}

double kl_prior(const Grid& m0, const Schedule& schedule) {
  const double abar = schedule.alpha_bar[idx(schedule.steps)];
  if (!(abar < 1.0)) throw std::invalid_argument("kl_prior: degenerate schedule with alpha_bar_T = 1");
  const double var = schedule.one_minus_alpha_bar[idx(schedule.steps)];
  const double per_element = var - 1.0 - std::log(var);
  double total = 0.0;
  for (double v : m0.values()) total += per_element + abar * v * v;
  return 0.5 * total;
}

KlSelection select_k_kl(std::span<const GridPair> dataset, const Schedule& schedule) {
  require_nonempty(dataset, "select_k_kl");
  const double n = static_cast<double>(dataset.size());
  KlSelection out;
  for (const auto& pair : dataset) out.mean_prior += kl_prior(pair.target, schedule) / n;
  out.mean_trajectory.assign(idx(schedule.steps) + 1, 0.0);
  for (int t = 1; t <= schedule.steps; ++t) {
    double mean = 0.0;
    for (const auto& pair : dataset) mean += kl_trajectory(pair.target, pair.proxy, t, schedule) / n;
    out.mean_trajectory[idx(t)] = mean;
    if (out.k == 0 && mean <= out.mean_prior) out.k = t;
  }
  if (out.k == 0) {
    out.k = schedule.steps;
    out.degenerate = true;
  }
  return out;
}

// ---------------------------------------------------------------------------

BoundaryClassifier::BoundaryClassifier(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.layers < 1 || config_.kernel % 2 == 0 || config_.channels == 0 || config_.channels % 2 != 0) {
    throw std::invalid_argument("invalid boundary classifier configuration");
  }
  Rng rng(seed, 0xB0DA);
  const std::size_t c = config_.channels;
  step_embedding_ = StepEmbedding(params_, "bp.step", c, rng);
  input_proj_ = Conv(params_, "bp.input", config_.bins, c, 1, rng);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = "bp.layer" + std::to_string(i);
    layers_.push_back({Linear(params_, p + ".step", c, c, rng), Conv(params_, p + ".conv", c, c, config_.kernel, rng)});
  }
  head_ = Linear(params_, "bp.head", c, 1, rng);
  zero_fill(head_.weight);
  zero_fill(head_.bias);
}

ad::Var BoundaryClassifier::logit(const Grid& noised, int t) const {
  if (noised.bins() != config_.bins) {
    throw std::invalid_argument("classifier expects " + std::to_string(config_.bins) + " bins, got " +
                                std::to_string(noised.bins()));
  }
  const std::size_t c = config_.channels;
  const ad::Var step = step_embedding_(t);
  ad::Var h = ad::relu(input_proj_(ad::Var::constant(noised.to_channel_major())));
  for (const auto& layer : layers_) {
    const ad::Var x = ad::add_channel_bias(h, ad::reshape(layer.step_proj(step), Shape{c}));
    h = ad::add(h, layer.conv(ad::relu(x)));
  }
  const ad::Var pooled = ad::reshape(ad::mean_over_length(ad::relu(h)), Shape{1, c});
  return ad::reshape(head_(pooled), Shape{});
}

double BoundaryClassifier::probability(const Grid& noised, int t) const {
  const double z = logit(noised, t).value().item();
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::vector<double> bp_train(BoundaryClassifier& classifier, std::span<const GridPair> dataset,
                             const Schedule& schedule, const BpTrainConfig& config) {
  require_nonempty(dataset, "bp_train");
  Rng rng(config.seed, 0xB9);
  Adam adam(classifier.params(), AdamConfig{.lr = config.lr});
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(std::max(config.steps, 0)));
  const int last_item = static_cast<int>(dataset.size()) - 1;
  for (int step = 0; step < config.steps; ++step) {
    adam.zero_grad();
    ad::Var total;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto& pair = dataset[static_cast<std::size_t>(rng.uniform_int(0, last_item))];
      const int t = rng.uniform_int(0, schedule.steps);
      const Grid eps_real = Grid::standard_normal(pair.target.frames(), pair.target.bins(), rng);
      const Grid eps_fake = Grid::standard_normal(pair.proxy.frames(), pair.proxy.bins(), rng);
      const ad::Var real = classifier.logit(forward_sample(pair.target, t, eps_real, schedule).grid, t);
      const ad::Var fake = classifier.logit(forward_sample(pair.proxy, t, eps_fake, schedule).grid, t);
      const ad::Var loss = ad::add(ad::bce_with_logits(real, 1.0), ad::bce_with_logits(fake, 0.0));
      total = total.defined() ? ad::add(total, loss) : loss;
    }
    total = ad::scale(total, 1.0 / static_cast<double>(config.batch));
    const double value = total.value().item();
    if (!std::isfinite(value)) {
      throw DivergenceError("boundary predictor loss became non-finite at step " + std::to_string(step));
    }
    history.push_back(value);
    ad::backward(total);
    adam.step();
  }
  return history;
}

MarginTable evaluate_margins(const BoundaryProbability& bp, std::span<const GridPair> dataset,
                             const Schedule& schedule, int draws, std::uint64_t seed) {
  require_nonempty(dataset, "evaluate_margins");
  if (draws < 1) throw std::invalid_argument("evaluate_margins needs at least one draw");
  const auto steps = idx(schedule.steps);
  const double n = static_cast<double>(dataset.size());
  MarginTable table;
  table.item_margins.assign(dataset.size(), std::vector<double>(steps, 0.0));
  table.mean_real.assign(steps, 0.0);
  table.mean_fake.assign(steps, 0.0);
  table.mean_margin.assign(steps, 0.0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& pair = dataset[i];
    require_same_shape(pair.target, pair.proxy, "evaluate_margins");
    Rng rng = Rng(seed, 0xE7A1).fork(i);
    for (int t = 1; t <= schedule.steps; ++t) {
      double real = 0.0, fake = 0.0;
      for (int d = 0; d < draws; ++d) {
        // Shared noise for both members, so the margin reflects the signal difference only.
        const Grid eps = Grid::standard_normal(pair.target.frames(), pair.target.bins(), rng);
        real += bp(forward_sample(pair.target, t, eps, schedule).grid, t);
        fake += bp(forward_sample(pair.proxy, t, eps, schedule).grid, t);
      }
      real /= draws;
      fake /= draws;
      const double margin = std::fabs(real - fake);
      table.item_margins[i][idx(t - 1)] = margin;
      table.mean_real[idx(t - 1)] += real / n;
      table.mean_fake[idx(t - 1)] += fake / n;
      table.mean_margin[idx(t - 1)] += margin / n;
    }
  }
  return table;
}

std::optional<int> earliest_k_prime(std::span<const double> margins, double tau) {
  const int steps = static_cast<int>(margins.size());
  // Suffix counts of steps under the threshold.
  std::vector<int> under(margins.size() + 1, 0);
  for (int t = steps; t >= 1; --t) under[idx(t - 1)] = under[idx(t)] + (margins[idx(t - 1)] < tau ? 1 : 0);
  for (int k = 1; k <= steps; ++k) {
    const int window = steps - k + 1;
    if (100 * under[idx(k - 1)] >= 95 * window) return k;
  }
  return std::nullopt;
}

ClassifierSelection select_k_from_margins(const std::vector<std::vector<double>>& item_margins, double tau,
                                          int steps) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("threshold tau must lie in (0, 1)");
  ClassifierSelection out;
  double total = 0.0;
  int admitted = 0;
  for (const auto& margins : item_margins) {
    if (static_cast<int>(margins.size()) != steps) throw std::invalid_argument("margin table does not cover 1..T");
    out.k_prime.push_back(earliest_k_prime(margins, tau));
    if (out.k_prime.back()) {
      total += *out.k_prime.back();
      ++admitted;
    }
  }
  if (admitted == 0) {
    throw std::invalid_argument("no item admits a boundary step at tau=" + std::to_string(tau) +
                                "; try a larger threshold");
  }
  const int k = static_cast<int>(std::floor(total / admitted + 0.5));
  out.k = std::clamp(k, 1, steps);
  return out;
}

ClassifierSelection select_k_classifier(const BoundaryProbability& bp, std::span<const GridPair> dataset, double tau,
                                        const Schedule& schedule, int draws, std::uint64_t seed) {
  const MarginTable table = evaluate_margins(bp, dataset, schedule, draws, seed);
  return select_k_from_margins(table.item_margins, tau, schedule.steps);
}

double classifier_accuracy(const BoundaryProbability& bp, std::span<const GridPair> dataset, int t,
                           const Schedule& schedule, int draws, std::uint64_t seed) {
  require_nonempty(dataset, "classifier_accuracy");
  schedule.check_step(t);
  long correct = 0, total = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& pair = dataset[i];
    Rng rng = Rng(seed, 0xACC).fork(i * 1000 + idx(t));
    for (int d = 0; d < draws; ++d) {
      const Grid eps_real = Grid::standard_normal(pair.target.frames(), pair.target.bins(), rng);
      const Grid eps_fake = Grid::standard_normal(pair.proxy.frames(), pair.proxy.bins(), rng);
      correct += bp(forward_sample(pair.target, t, eps_real, schedule).grid, t) > 0.5 ? 1 : 0;
      correct += bp(forward_sample(pair.proxy, t, eps_fake, schedule).grid, t) < 0.5 ? 1 : 0;
      total += 2;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

BoundaryReport build_boundary_report(const BoundaryProbability& bp, std::span<const GridPair> dataset, double tau,
                                     const Schedule& schedule, int draws, std::uint64_t seed) {
  const MarginTable table = evaluate_margins(bp, dataset, schedule, draws, seed);
  const KlSelection kl = select_k_kl(dataset, schedule);
  BoundaryReport report;
  report.tau = tau;
  report.k_classifier = select_k_from_margins(table.item_margins, tau, schedule.steps).k;
  report.k_kl = kl.k;
  report.kl_degenerate = kl.degenerate;
  for (int t = 1; t <= schedule.steps; ++t) {
    const auto i = idx(t - 1);
    report.steps.push_back({t, table.mean_real[i], table.mean_fake[i], table.mean_margin[i],
                            kl.mean_trajectory[idx(t)], kl.mean_prior});
  }
  return report;
}

}  // namespace shallowdiff
