#include "shallowdiff/score_encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace shallowdiff {

std::size_t MusicScore::frames() const {
  std::size_t total = 0;
  for (int d : durations) total += static_cast<std::size_t>(std::max(d, 0));
  return total;
}

void validate_score(const MusicScore& score, std::size_t vocab, std::size_t pitch_vocab) {
  if (score.phonemes.empty()) throw std::invalid_argument("score has no phonemes");
  if (score.phonemes.size() != score.pitches.size() || score.phonemes.size() != score.durations.size()) {
    throw std::invalid_argument("score lists differ in length");
  }
  for (std::size_t i = 0; i < score.phonemes.size(); ++i) {
    if (score.phonemes[i] < 0 || static_cast<std::size_t>(score.phonemes[i]) >= vocab) {
      throw std::invalid_argument("phoneme id " + std::to_string(score.phonemes[i]) + " outside vocabulary of " +
                                  std::to_string(vocab));
    }
    if (score.pitches[i] < 0 || static_cast<std::size_t>(score.pitches[i]) >= pitch_vocab) {
      throw std::invalid_argument("pitch id " + std::to_string(score.pitches[i]) + " outside pitch vocabulary of " +
                                  std::to_string(pitch_vocab));
    }
    if (score.durations[i] <= 0) {
      throw std::invalid_argument("phoneme " + std::to_string(i) + " has non-positive duration");
    }
  }
}

std::vector<std::size_t> length_regulator_index(const std::vector<int>& durations) {
  std::vector<std::size_t> index;
  for (std::size_t p = 0; p < durations.size(); ++p) index.insert(index.end(), static_cast<std::size_t>(durations[p]), p);
  return index;
}

void EncoderConfig::validate() const {
  if (vocab == 0 || pitch_vocab == 0 || channels == 0 || bins == 0) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("channels (" + std::to_string(channels) + ") not divisible by heads (" +
                                std::to_string(heads) + ")");
  }
  if (ffn_kernel % 2 == 0) throw std::invalid_argument("FFT block kernel must be odd");
}

// ---------------------------------------------------------------------------

FftBlock::FftBlock(ParamSet& params, const std::string& prefix, const EncoderConfig& config, Rng& rng)
    : heads_(config.heads),
      attn_norm_(params, prefix + ".attn_norm", config.channels),
      query_(params, prefix + ".query", config.channels, config.channels, rng),
      key_(params, prefix + ".key", config.channels, config.channels, rng),
      value_(params, prefix + ".value", config.channels, config.channels, rng),
      attn_out_(params, prefix + ".attn_out", config.channels, config.channels, rng),
      ffn_norm_(params, prefix + ".ffn_norm", config.channels),
      ffn_in_(params, prefix + ".ffn_in", config.channels, config.ffn_hidden, config.ffn_kernel, rng),
      ffn_out_(params, prefix + ".ffn_out", config.ffn_hidden, config.channels, 1, rng) {
  config.validate();
}

ad::Var FftBlock::attend(const ad::Var& normed, std::vector<Array>* probabilities) const {
  const std::size_t channels = normed.shape()[1];
  const std::size_t head_dim = channels / heads_;
  const ad::Var q = query_(normed);
  const ad::Var k = key_(normed);
  const ad::Var v = value_(normed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> outputs;
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const ad::Var scores =
        ad::scale(ad::matmul(ad::slice_cols(q, lo, hi), ad::transpose(ad::slice_cols(k, lo, hi))), scale);
    const ad::Var weights = ad::softmax_rows(scores);
    if (probabilities) probabilities->push_back(weights.value());
    outputs.push_back(ad::matmul(weights, ad::slice_cols(v, lo, hi)));
  }
  return attn_out_(ad::concat_cols(outputs));
}

ad::Var FftBlock::operator()(const ad::Var& x) const {
  if (x.value().rank() != 2 || x.shape()[1] % heads_ != 0) {
    throw std::invalid_argument("FFT block input " + shape_string(x.shape()) + " incompatible with " +
                                std::to_string(heads_) + " heads");
  }
  const ad::Var h = ad::add(x, attend(attn_norm_(x), nullptr));
  const ad::Var normed = ad::transpose(ffn_norm_(h));
  const ad::Var ffn = ad::transpose(ffn_out_(ad::relu(ffn_in_(normed))));
  return ad::add(h, ffn);
}

std::vector<Array> FftBlock::attention_probabilities(const ad::Var& x) const {
  std::vector<Array> out;
  attend(attn_norm_(x), &out);
  return out;
}

void FftBlock::zero_output_projections() {
  zero_fill(attn_out_.weight);
  zero_fill(attn_out_.bias);
  zero_fill(ffn_out_.weight);
  zero_fill(ffn_out_.bias);
}

// ---------------------------------------------------------------------------

ScoreEncoder::ScoreEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed, 0x5C03E);
  phoneme_table_ = params_.add_uniform("encoder.phoneme_embedding", Shape{config_.vocab, config_.channels}, 1, rng);
  pitch_table_ = params_.add_uniform("encoder.pitch_embedding", Shape{config_.pitch_vocab, config_.channels}, 1, rng);
  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    encoder_blocks_.emplace_back(params_, "encoder.fft" + std::to_string(i), config_, rng);
  }
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    decoder_blocks_.emplace_back(params_, "aux.fft" + std::to_string(i), config_, rng);
  }
  decoder_norm_ = LayerNorm(params_, "aux.norm", config_.channels);
  to_bins_ = Linear(params_, "aux.to_bins", config_.channels, config_.bins, rng);
}

ad::Var ScoreEncoder::linguistic(const MusicScore& score) const {
  validate_score(score, config_.vocab, config_.pitch_vocab);
  std::vector<std::size_t> ids(score.phonemes.begin(), score.phonemes.end());
  ad::Var x = ad::gather_rows(phoneme_table_, ids);
  x = ad::add(x, ad::Var::constant(sinusoidal_positions(ids.size(), config_.channels)));
  for (const auto& block : encoder_blocks_) x = block(x);
  return x;
}

ad::Var ScoreEncoder::encode(const MusicScore& score) const {
  const ad::Var hidden = linguistic(score);
  const auto expand = length_regulator_index(score.durations);
  std::vector<std::size_t> frame_pitch(expand.size());
  for (std::size_t f = 0; f < expand.size(); ++f) frame_pitch[f] = static_cast<std::size_t>(score.pitches[expand[f]]);
  return ad::add(ad::gather_rows(hidden, expand), ad::gather_rows(pitch_table_, frame_pitch));
}

ad::Var ScoreEncoder::aux_decode(const ad::Var& condition) const {
  if (condition.value().rank() != 2 || condition.shape()[1] != config_.channels) {
    throw std::invalid_argument("aux decoder expects [frames x " + std::to_string(config_.channels) + "], got " +
                                shape_string(condition.shape()));
  }
  ad::Var x = ad::add(condition, ad::Var::constant(sinusoidal_positions(condition.shape()[0], config_.channels)));
  for (const auto& block : decoder_blocks_) x = block(x);
  return to_bins_(decoder_norm_(x));
}

Grid ScoreEncoder::predict(const MusicScore& score) const { return Grid::from_array(aux_decode(encode(score)).value()); }

double l1_loss(const Grid& pred, const Grid& target) {
  require_same_shape(pred, target, "l1_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::fabs(pred[i] - target[i]);
  return total / static_cast<double>(pred.size());
}

}  // namespace shallowdiff
