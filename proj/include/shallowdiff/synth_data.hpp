#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shallowdiff/grid.hpp"
#include "shallowdiff/score_encoder.hpp"

namespace shallowdiff {

struct SynthSpec {
  std::uint64_t seed = 1234;
  std::size_t items = 96;
  std::size_t frames = 16;
  std::size_t bins = 32;
  std::size_t vocab = 16;
  std::size_t pitch_vocab = 8;
  std::size_t harmonics = 3;
  double noise_floor = 0.0;
  std::size_t blur_radius = 2;
  /// Standard deviation of each harmonic bump, in bins.
  double harmonic_width = 0.6;

  void validate() const;
};

struct SynthItem {
  MusicScore score;
  Grid target;
};

/// Bin of the fundamental for a pitch ID.
std::size_t fundamental_bin(int pitch);

/// Harmonic-stack grids in [-1, 1]. Harmonics that fall outside the bin range
/// are dropped and reported once each through `warnings` when given.
std::vector<SynthItem> generate(const SynthSpec& spec, std::vector<std::string>* warnings = nullptr);

/// Separable box blur over both axes. Windows are truncated at the edges and
/// averaged over the taps that exist, so the output stays inside [-1, 1].
Grid blur_proxy(const Grid& target, std::size_t radius);

}  // namespace shallowdiff
