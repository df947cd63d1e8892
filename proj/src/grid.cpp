#include "shallowdiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shallowdiff {

Grid::Grid(std::size_t frames, std::size_t bins, double fill)
    : frames_(frames), bins_(bins), values_(frames * bins, fill) {}

Grid::Grid(std::size_t frames, std::size_t bins, std::vector<double> values)
    : frames_(frames), bins_(bins), values_(std::move(values)) {
  if (values_.size() != frames * bins) {
    throw std::invalid_argument("grid of " + std::to_string(frames) + "x" + std::to_string(bins) + " given " +
                                std::to_string(values_.size()) + " values");
  }
}

Grid Grid::standard_normal(std::size_t frames, std::size_t bins, Rng& rng) {
  Grid g(frames, bins);
  for (double& v : g.values_) v = rng.normal();
  return g;
}

Grid Grid::from_array(const Array& array) {
  if (array.rank() != 2) throw std::invalid_argument("grid needs a rank-2 array, got " + shape_string(array.shape()));
  return Grid(array.extent(0), array.extent(1), array.values());
}

bool Grid::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Array Grid::to_array() const { return Array(Shape{frames_, bins_}, values_); }

Array Grid::to_channel_major() const {
  Array out(Shape{bins_, frames_});
  for (std::size_t f = 0; f < frames_; ++f)
    for (std::size_t b = 0; b < bins_; ++b) out[b * frames_ + f] = values_[f * bins_ + b];
  return out;
}

Grid Grid::from_channel_major(const Array& array) {
  if (array.rank() != 2) throw std::invalid_argument("grid needs a rank-2 array, got " + shape_string(array.shape()));
  const std::size_t bins = array.extent(0), frames = array.extent(1);
  Grid g(frames, bins);
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t f = 0; f < frames; ++f) g.at(f, b) = array[b * frames + f];
  return g;
}

Grid Grid::clipped(double lo, double hi) const {
  Grid out = *this;
  for (double& v : out.values_) v = std::clamp(v, lo, hi);
  return out;
}

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": grid shape mismatch " + std::to_string(a.frames()) + "x" +
                                std::to_string(a.bins()) + " vs " + std::to_string(b.frames()) + "x" +
                                std::to_string(b.bins()));
  }
}

double squared_distance(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "squared_distance");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total;
}

double mean_squared_distance(const Grid& a, const Grid& b) {
  return squared_distance(a, b) / static_cast<double>(a.size());
}

}  // namespace shallowdiff
