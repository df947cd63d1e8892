#include "shallowdiff/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace shallowdiff {

namespace {

// Bumps below this are cut so a narrow harmonic lights a single row.
constexpr double kBumpFloor = 1e-3;

std::vector<int> random_durations(std::size_t phonemes, std::size_t frames, Rng& rng) {
  std::vector<int> durations(phonemes, 1);
  for (std::size_t extra = phonemes; extra < frames; ++extra) {
    ++durations[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(phonemes) - 1))];
  }
  return durations;
}

// Timbre of a phoneme: one weight per harmonic, fixed by the phoneme ID so the
// mapping from score to grid is learnable.
std::vector<double> harmonic_weights(std::uint64_t seed, int phoneme, std::size_t harmonics) {
  Rng rng = Rng(seed, 0x7137).fork(static_cast<std::uint64_t>(phoneme));
  std::vector<double> w(harmonics);
  for (auto& x : w) x = 0.35 + 0.65 * rng.uniform();
  return w;
}

std::vector<double> box_blur_1d(const std::vector<double>& line, std::size_t radius) {
  const auto n = static_cast<std::ptrdiff_t>(line.size());
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::vector<double> out(line.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - r);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + r);
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += line[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (frames < 8 || bins < 8) throw std::invalid_argument("synthetic grids need at least 8 frames and 8 bins");
  if (harmonics < 1) throw std::invalid_argument("harmonics must be at least 1");
  if (items < 1 || vocab < 1 || pitch_vocab < 1) throw std::invalid_argument("items and vocabularies must be positive");
  if (!(noise_floor >= 0.0) || !std::isfinite(noise_floor)) throw std::invalid_argument("noise floor must be >= 0");
  if (!(harmonic_width > 0.0) || !std::isfinite(harmonic_width)) throw std::invalid_argument("harmonic width must be > 0");
  if (blur_radius < 1) throw std::invalid_argument("blur radius must be at least 1");
}

std::size_t fundamental_bin(int pitch) { return 2 + static_cast<std::size_t>(pitch); }

std::vector<SynthItem> generate(const SynthSpec& spec, std::vector<std::string>* warnings) {
  spec.validate();
  std::set<std::pair<int, std::size_t>> clipped;
  std::vector<SynthItem> items;
  items.reserve(spec.items);
  const Rng base(spec.seed, 0x5E7D);
  const std::size_t max_phonemes = std::max<std::size_t>(2, std::min<std::size_t>(5, spec.frames / 3));

  for (std::size_t i = 0; i < spec.items; ++i) {
    Rng rng = base.fork(i);
    SynthItem item;
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, static_cast<int>(max_phonemes)));
    for (std::size_t p = 0; p < n; ++p) {
      item.score.phonemes.push_back(rng.uniform_int(0, static_cast<int>(spec.vocab) - 1));
      item.score.pitches.push_back(rng.uniform_int(0, static_cast<int>(spec.pitch_vocab) - 1));
    }
    item.score.durations = random_durations(n, spec.frames, rng);

    item.target = Grid(spec.frames, spec.bins);
    std::size_t frame = 0;
    for (std::size_t p = 0; p < n; ++p) {
      const int pitch = item.score.pitches[p];
      const std::size_t f0 = fundamental_bin(pitch);
      const auto weights = harmonic_weights(spec.seed, item.score.phonemes[p], spec.harmonics);
      const auto dur = static_cast<std::size_t>(item.score.durations[p]);
      for (std::size_t j = 0; j < dur; ++j, ++frame) {
        const double envelope = 0.6 + 0.4 * std::sin(std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(dur));
        for (std::size_t b = 0; b < spec.bins; ++b) {
          double amplitude = 0.0;
          for (std::size_t h = 1; h <= spec.harmonics; ++h) {
            const std::size_t center = h * f0;
            if (center >= spec.bins) {
              clipped.insert({pitch, h});
              continue;
            }
            const double d = (static_cast<double>(b) - static_cast<double>(center)) / spec.harmonic_width;
            const double bump = std::exp(-0.5 * d * d);
            if (bump >= kBumpFloor) amplitude += weights[h - 1] * bump;
          }
          amplitude *= envelope;
          if (spec.noise_floor > 0.0) amplitude += spec.noise_floor * std::fabs(rng.normal());
          item.target.at(frame, b) = 2.0 * std::clamp(amplitude, 0.0, 1.0) - 1.0;
        }
      }
    }
    items.push_back(std::move(item));
  }

  if (warnings) {
    for (const auto& [pitch, h] : clipped) {
      warnings->push_back("harmonic " + std::to_string(h) + " of pitch " + std::to_string(pitch) +
                          " exceeds the bin range and was dropped");
    }
  }
  return items;
}

Grid blur_proxy(const Grid& target, std::size_t radius) {
  if (radius < 1) throw std::invalid_argument("blur radius must be at least 1");
  const std::size_t frames = target.frames(), bins = target.bins();
  Grid out(frames, bins);
  std::vector<double> line;
  // Along bins.
  for (std::size_t f = 0; f < frames; ++f) {
    line.assign(target.values().begin() + static_cast<std::ptrdiff_t>(f * bins),
                target.values().begin() + static_cast<std::ptrdiff_t>((f + 1) * bins));
    const auto blurred = box_blur_1d(line, radius);
    for (std::size_t b = 0; b < bins; ++b) out.at(f, b) = blurred[b];
  }
  // Along frames.
  for (std::size_t b = 0; b < bins; ++b) {
    line.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) line[f] = out.at(f, b);
    const auto blurred = box_blur_1d(line, radius);
    for (std::size_t f = 0; f < frames; ++f) out.at(f, b) = blurred[f];
  }
  return out.clipped(-1.0, 1.0);
}

}  // namespace shallowdiff
