#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "shallowdiff/boundary.hpp"
#include "shallowdiff/denoiser.hpp"
#include "shallowdiff/schedule.hpp"
#include "shallowdiff/score_encoder.hpp"
#include "shallowdiff/synth_data.hpp"

namespace shallowdiff {

enum class BoundaryMethod { classifier, kl, fixed };
/// Main-stage step range: Uniform{1..k} for shallow training, Uniform{1..T} for the naive baseline.
enum class TrainRange { boundary, full };

std::string to_string(BoundaryMethod method);
std::string to_string(TrainRange range);

/// Every tunable of a run. Defaults are the desk profile.
struct RunConfig {
  // schedule
  int steps = 100;
  double beta_first = 1e-4;
  double beta_last = 0.06;

  // model
  std::size_t channels = 32;        // denoiser residual channels
  std::size_t layers = 4;           // denoiser blocks
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  std::size_t encoder_channels = 32;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 64;
  std::size_t vocab = 16;
  std::size_t pitch_vocab = 8;
  std::size_t frames = 16;
  std::size_t bins = 32;
  std::size_t bp_channels = 16;
  std::size_t bp_layers = 5;

  // data
  std::size_t train_items = 64;
  std::size_t valid_items = 32;
  std::size_t harmonics = 3;
  double noise_floor = 0.0;
  std::size_t blur_radius = 2;
  double harmonic_width = 0.6;

  // training
  double lr = 6e-3;
  std::size_t batch = 32;
  int warmup_steps = 300;
  int main_steps = 2000;
  int bp_steps = 1000;
  int checkpoint_every = 500;
  bool lr_decay = true;  // linear decay to zero over each gradient stage
  TrainRange train_range = TrainRange::boundary;
  std::uint64_t seed = 1234;

  // boundary
  double tau = 0.4;
  BoundaryMethod method = BoundaryMethod::classifier;
  int fixed_k = 54;
  int margin_draws = 4;

  // paths
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";

  /// Throws ValidationError.
  void validate() const;

  Schedule schedule() const;
  EncoderConfig encoder() const;
  DenoiserConfig denoiser() const;
  ClassifierConfig classifier() const;
  SynthSpec synth() const;
};

/// "desk" (the defaults) or "full" (full-scale step counts and widths).
RunConfig profile(std::string_view name);

/// Applies one key=value setting; unknown keys and malformed values throw ValidationError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
/// Applies a "key=value" assignment.
void apply_assignment(RunConfig& config, std::string_view assignment);
/// Reads a key=value file. Blank lines and lines starting with '#' are skipped.
void apply_file(RunConfig& config, const std::filesystem::path& path);
void apply_text(RunConfig& config, std::string_view text, const std::string& origin);
/// SHALLOWDIFF_SEED, when set, replaces the seed.
void apply_environment(RunConfig& config);

/// Round-trippable key=value text.
std::string to_text(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace shallowdiff
