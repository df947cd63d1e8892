#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "shallowdiff/io.hpp"
#include "shallowdiff/synth_data.hpp"

namespace sd = shallowdiff;
using sd::Grid;

namespace {

std::uint64_t dataset_hash(const std::vector<sd::SynthItem>& items) {
  std::string bytes;
  for (const auto& item : items) bytes += sd::io::format_score(item.score) + '\n' + sd::io::encode_grid(item.target);
  return sd::io::fnv1a(bytes);
}

TEST(Generate, DurationsSumToFramesAndValuesInRange) {
  sd::SynthSpec spec;
  spec.items = 40;
  spec.noise_floor = 0.1;
  for (const auto& item : sd::generate(spec)) {
    EXPECT_EQ(std::accumulate(item.score.durations.begin(), item.score.durations.end(), 0), 16);
    EXPECT_NO_THROW(sd::validate_score(item.score, spec.vocab, spec.pitch_vocab));
    for (double v : item.target.values()) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
  }
}

TEST(Generate, SingleNarrowHarmonicLightsOneRowPerFrame) {
  sd::SynthSpec spec;
  spec.items = 12;
  spec.harmonics = 1;
  spec.harmonic_width = 0.2;
  for (const auto& item : sd::generate(spec)) {
    std::size_t frame = 0;
    for (std::size_t p = 0; p < item.score.phonemes.size(); ++p) {
      const std::size_t expected = sd::fundamental_bin(item.score.pitches[p]);
      for (int j = 0; j < item.score.durations[p]; ++j, ++frame) {
        for (std::size_t b = 0; b < spec.bins; ++b) {
          if (b == expected) EXPECT_GT(item.target.at(frame, b), -1.0);
          else EXPECT_EQ(item.target.at(frame, b), -1.0) << "frame " << frame << " bin " << b;
        }
      }
    }
  }
}

TEST(Generate, FixedSeedIsByteIdenticalAndPinned) {
  sd::SynthSpec spec;
  const auto a = sd::generate(spec), b = sd::generate(spec);
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  EXPECT_EQ(sd::io::hex(dataset_hash(a)), "364840779f4aa5df");
  spec.seed = 99;
  EXPECT_NE(dataset_hash(sd::generate(spec)), dataset_hash(a));
}

TEST(Generate, OutOfRangeHarmonicsAreDroppedWithWarning) {
  sd::SynthSpec spec;
  spec.items = 30;
  spec.bins = 12;
  spec.harmonics = 4;
  std::vector<std::string> warnings;
  const auto items = sd::generate(spec, &warnings);
  EXPECT_FALSE(warnings.empty());
  for (const auto& w : warnings) EXPECT_NE(w.find("exceeds the bin range"), std::string::npos);
  for (const auto& item : items) EXPECT_TRUE(item.target.all_finite());
}

TEST(Generate, RejectsInvalidSpecs) {
  sd::SynthSpec spec;
  spec.frames = 7;
  EXPECT_THROW(sd::generate(spec), std::invalid_argument);
  spec = {};
  spec.harmonics = 0;
  EXPECT_THROW(sd::generate(spec), std::invalid_argument);
  spec = {};
  spec.noise_floor = -0.1;
  EXPECT_THROW(sd::generate(spec), std::invalid_argument);
}

TEST(BlurProxy, HugeRadiusGivesGridMean) {
  sd::Rng rng(1);
  Grid g = Grid::standard_normal(9, 11, rng).clipped();
  double mean = 0;
  for (double v : g.values()) mean += v;
  mean /= static_cast<double>(g.size());
  const Grid blurred = sd::blur_proxy(g, 50);
  for (double v : blurred.values()) EXPECT_NEAR(v, mean, 1e-12);
}

TEST(BlurProxy, ConstantGridIsFixed) {
  const Grid g(8, 8, -0.25);
  EXPECT_EQ(sd::blur_proxy(g, 3), g);
}

TEST(BlurProxy, ChangesEveryNonConstantGrid) {
  sd::SynthSpec spec;
  spec.items = 10;
  for (const auto& item : sd::generate(spec)) {
    const Grid blurred = sd::blur_proxy(item.target, 1);
    EXPECT_GT(sd::squared_distance(blurred, item.target), 0.0);
    for (double v : blurred.values()) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
  }
  EXPECT_THROW(sd::blur_proxy(Grid(8, 8), 0), std::invalid_argument);
}

}  // namespace
