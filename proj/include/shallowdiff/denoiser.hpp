#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "shallowdiff/diffusion.hpp"
#include "shallowdiff/grid.hpp"
#include "shallowdiff/layers.hpp"
#include "shallowdiff/params.hpp"

namespace shallowdiff {

/// Sinusoidal step encoding followed by two affine+tanh layers.
class StepEmbedding {
 public:
  StepEmbedding() = default;
  StepEmbedding(ParamSet& params, const std::string& prefix, std::size_t channels, Rng& rng);

  /// [1 x channels].
  ad::Var operator()(int t) const;
  std::size_t channels() const { return channels_; }

 private:
  std::size_t channels_ = 0;
  Linear hidden_;
  Linear out_;
};

struct DenoiserConfig {
  std::size_t channels = 32;
  std::size_t layers = 4;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  std::size_t bins = 32;
  std::size_t cond_channels = 32;

  void validate() const;
};

/// Non-causal WaveNet-style noise predictor conditioned on the step and the
/// music condition sequence.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;

  /// noised: [bins x frames] channel-major grid. condition: [cond_channels x frames].
  /// Returns the noise prediction as [bins x frames]. `ablate_skip` drops one
  /// block's skip contribution.
  ad::Var forward(const ad::Var& noised, const ad::Var& condition, int t,
                  std::optional<std::size_t> ablate_skip = std::nullopt) const;

  /// Grid-level convenience. condition is [frames x cond_channels].
  Grid predict(const Grid& noised, const Array& condition, int t) const;

  /// Binds a condition so the predictor can drive the samplers.
  EpsPredictor bind(const Array& condition) const;

  const DenoiserConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  struct Block {
    Linear step_proj;  // per-block affine on E_t
    Conv dilated;      // C -> 2C, kernel
    Conv conditioner;  // E_m -> 2C, 1x1
    Conv output;       // C -> 2C, 1x1; first half residual, second half skip
  };

  DenoiserConfig config_;
  ParamSet params_;
  StepEmbedding step_embedding_;
  Conv input_proj_;
  std::vector<Block> blocks_;
  Conv output_proj_;
};

}  // namespace shallowdiff
