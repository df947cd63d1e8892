#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "shallowdiff/denoiser.hpp"
#include "shallowdiff/grid.hpp"
#include "shallowdiff/params.hpp"
#include "shallowdiff/schedule.hpp"

namespace shallowdiff {

/// Ground truth M and its auxiliary (blurry) counterpart M~.
struct GridPair {
  Grid target;
  Grid proxy;
};

/// KL( q(M_t|M_0) || q(M~_t|M~_0) ) = abar_t / (2 (1 - abar_t)) * ||M~_0 - M_0||^2.
double kl_trajectory(const Grid& m0, const Grid& m0_tilde, int t, const Schedule& schedule);

/// KL( N(sqrt(abar_T) m0, (1 - abar_T) I) || N(0, I) ).
double kl_prior(const Grid& m0, const Schedule& schedule);

struct KlSelection {
  int k = 0;
  /// No step met the criterion and k fell back to T.
  bool degenerate = false;
  std::vector<double> mean_trajectory;  // index t, entry 0 unused
  double mean_prior = 0.0;
};

/// Smallest t whose dataset-mean trajectory KL is at most the dataset-mean prior KL.
KlSelection select_k_kl(std::span<const GridPair> dataset, const Schedule& schedule);

struct ClassifierConfig {
  std::size_t channels = 16;
  std::size_t layers = 5;
  std::size_t kernel = 3;
  std::size_t bins = 32;
};

/// Residual convolutional classifier telling noised ground truth (label 1)
/// from noised auxiliary output (label 0) at a given step.
class BoundaryClassifier {
 public:
  BoundaryClassifier(const ClassifierConfig& config, std::uint64_t seed);
  BoundaryClassifier(const BoundaryClassifier&) = delete;
  BoundaryClassifier& operator=(const BoundaryClassifier&) = delete;
  BoundaryClassifier(BoundaryClassifier&&) = default;

  /// Single logit for a noised grid.
  ad::Var logit(const Grid& noised, int t) const;
  double probability(const Grid& noised, int t) const;

  const ClassifierConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  struct Layer {
    Linear step_proj;
    Conv conv;
  };

  ClassifierConfig config_;
  ParamSet params_;
  StepEmbedding step_embedding_;
  Conv input_proj_;
  std::vector<Layer> layers_;
  Linear head_;
};

/// Probability that a noised grid at step t came from the ground truth.
using BoundaryProbability = std::function<double(const Grid& noised, int t)>;

struct BpTrainConfig {
  int steps = 1000;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Minimizes the boundary cross-entropy with t ~ Uniform{0..T}. Returns the
/// per-step loss. Throws DivergenceError on a non-finite loss.
std::vector<double> bp_train(BoundaryClassifier& classifier, std::span<const GridPair> dataset,
                             const Schedule& schedule, const BpTrainConfig& config);

/// Per-item margins |mean BP(M_t) - mean BP(M~_t)| for t = 1..T (index t-1),
/// averaged over `draws` shared noise draws, plus the per-step means.
struct MarginTable {
  std::vector<std::vector<double>> item_margins;
  std::vector<double> mean_real;  // index t-1
  std::vector<double> mean_fake;
  std::vector<double> mean_margin;
};

MarginTable evaluate_margins(const BoundaryProbability& bp, std::span<const GridPair> dataset,
                             const Schedule& schedule, int draws, std::uint64_t seed);

/// Earliest k' such that at least 95% of steps t in [k', T] have margin < tau.
/// margins is indexed by t-1. Empty when no k' qualifies.
std::optional<int> earliest_k_prime(std::span<const double> margins, double tau);

struct ClassifierSelection {
  int k = 0;
  std::vector<std::optional<int>> k_prime;  // per item
};

/// k = round-half-up of the mean k' over the items that admit one, clamped to [1, T].
ClassifierSelection select_k_from_margins(const std::vector<std::vector<double>>& item_margins, double tau, int steps);

ClassifierSelection select_k_classifier(const BoundaryProbability& bp, std::span<const GridPair> dataset, double tau,
                                        const Schedule& schedule, int draws, std::uint64_t seed);

/// Fraction of correct decisions (threshold 0.5) over both members of every pair at step t.
double classifier_accuracy(const BoundaryProbability& bp, std::span<const GridPair> dataset, int t,
                           const Schedule& schedule, int draws, std::uint64_t seed);

struct StepRecord {
  int t = 0;
  double bp_real = 0.0;
  double bp_fake = 0.0;
  double margin = 0.0;
  double kl_traj = 0.0;
  double kl_prior = 0.0;
};

struct BoundaryReport {
  std::vector<StepRecord> steps;  // t = 1..T
  int k_classifier = 0;
  int k_kl = 0;
  double tau = 0.4;
  bool kl_degenerate = false;
};

BoundaryReport build_boundary_report(const BoundaryProbability& bp, std::span<const GridPair> dataset, double tau,
                                     const Schedule& schedule, int draws, std::uint64_t seed);

}  // namespace shallowdiff
