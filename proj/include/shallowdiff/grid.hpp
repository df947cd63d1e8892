#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shallowdiff/array.hpp"
#include "shallowdiff/rng.hpp"

namespace shallowdiff {

/// frames x bins stand-in for a mel-spectrogram, row-major by frame.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t frames, std::size_t bins, double fill = 0.0);
  Grid(std::size_t frames, std::size_t bins, std::vector<double> values);

  static Grid standard_normal(std::size_t frames, std::size_t bins, Rng& rng);
  static Grid from_array(const Array& array);

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t frame, std::size_t bin) { return values_[frame * bins_ + bin]; }
  double at(std::size_t frame, std::size_t bin) const { return values_[frame * bins_ + bin]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const Grid& other) const { return frames_ == other.frames_ && bins_ == other.bins_; }
  bool all_finite() const;

  /// [frames x bins] array.
  Array to_array() const;
  /// [bins x frames] array, the channel-major layout the convolutional nets use.
  Array to_channel_major() const;
  static Grid from_channel_major(const Array& array);

  Grid clipped(double lo = -1.0, double hi = 1.0) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<double> values_;
};

void require_same_shape(const Grid& a, const Grid& b, const char* what);

double squared_distance(const Grid& a, const Grid& b);
double mean_squared_distance(const Grid& a, const Grid& b);

}  // namespace shallowdiff
