#pragma once

#include <array>
#include <cstdint>

namespace shallowdiff {

/// Counter-based generator (Philox4x32-10). A (seed, stream) pair names an
/// independent sequence, so every stochastic operation can take its own
/// stream and results do not depend on call interleaving elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  /// Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t substream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace shallowdiff
