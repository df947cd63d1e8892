#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "shallowdiff/grid.hpp"
#include "shallowdiff/layers.hpp"
#include "shallowdiff/params.hpp"

namespace shallowdiff {

/// Symbolic condition: one entry per phoneme.
struct MusicScore {
  std::vector<int> phonemes;
  std::vector<int> pitches;
  std::vector<int> durations;  // frames per phoneme

  std::size_t frames() const;
  friend bool operator==(const MusicScore&, const MusicScore&) = default;
};

/// Throws std::invalid_argument on unequal lengths, zero durations or IDs
/// outside the vocabularies.
void validate_score(const MusicScore& score, std::size_t vocab, std::size_t pitch_vocab);

/// Indices that expand per-phoneme rows to per-frame rows.
std::vector<std::size_t> length_regulator_index(const std::vector<int>& durations);

struct EncoderConfig {
  std::size_t vocab = 16;
  std::size_t pitch_vocab = 8;
  std::size_t channels = 32;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 64;
  std::size_t ffn_kernel = 9;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t bins = 32;

  void validate() const;
};

/// Feed-forward Transformer block (pre-norm): multi-head self-attention and a
/// two-layer convolution (kernels ffn_kernel and 1), each wrapped in a residual.
class FftBlock {
 public:
  FftBlock(ParamSet& params, const std::string& prefix, const EncoderConfig& config, Rng& rng);

  /// [frames x channels] -> [frames x channels].
  ad::Var operator()(const ad::Var& x) const;

  /// Per-head attention probabilities for inspection, each [frames x frames].
  std::vector<Array> attention_probabilities(const ad::Var& x) const;

  void zero_output_projections();

 private:
  ad::Var attend(const ad::Var& normed, std::vector<Array>* probabilities) const;

  std::size_t heads_;
  LayerNorm attn_norm_;
  Linear query_, key_, value_, attn_out_;
  LayerNorm ffn_norm_;
  Conv ffn_in_, ffn_out_;
};

/// Music-score encoder plus the L1-trained auxiliary decoder that produces the
/// blurry prediction used to seed shallow diffusion.
class ScoreEncoder {
 public:
  ScoreEncoder(const EncoderConfig& config, std::uint64_t seed);
  ScoreEncoder(const ScoreEncoder&) = delete;
  ScoreEncoder& operator=(const ScoreEncoder&) = delete;
  ScoreEncoder(ScoreEncoder&&) = default;

  /// Condition sequence E_m, [frames x channels].
  ad::Var encode(const MusicScore& score) const;
  /// Phoneme-level hidden sequence before the length regulator, [phonemes x channels].
  ad::Var linguistic(const MusicScore& score) const;
  /// Auxiliary prediction, [frames x bins].
  ad::Var aux_decode(const ad::Var& condition) const;

  Grid predict(const MusicScore& score) const;

  const EncoderConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::vector<FftBlock>& encoder_blocks() { return encoder_blocks_; }

 private:
  EncoderConfig config_;
  ParamSet params_;
  ad::Var phoneme_table_;
  ad::Var pitch_table_;
  std::vector<FftBlock> encoder_blocks_;
  std::vector<FftBlock> decoder_blocks_;
  LayerNorm decoder_norm_;
  Linear to_bins_;
};

/// Mean absolute error.
double l1_loss(const Grid& pred, const Grid& target);

}  // namespace shallowdiff
