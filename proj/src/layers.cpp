#include "shallowdiff/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace shallowdiff {

Array sinusoidal_positions(std::size_t length, std::size_t channels) {
  Array pe(Shape{length, channels});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(channels);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe.at(pos, c) = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Array sinusoidal_step(int t, std::size_t channels) {
  if (channels < 2 || channels % 2 != 0) throw std::invalid_argument("step encoding needs an even channel count");
  if (t < 0) throw std::invalid_argument("step encoding needs t >= 0");
  const std::size_t half = channels / 2;
  Array out(Shape{channels});
  for (std::size_t j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half - 1)) : 1.0;
    out[j] = std::sin(t * freq);
    out[half + j] = std::cos(t * freq);
  }
  return out;
}

Linear::Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(params.add_uniform(name + ".weight", Shape{in, out}, in, rng)),
      bias(params.add_uniform(name + ".bias", Shape{out}, in, rng)) {}

ad::Var Linear::operator()(const ad::Var& x) const { return ad::add(ad::matmul(x, weight), bias); }

Conv::Conv(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
           std::size_t dilation_)
    : weight(params.add_uniform(name + ".weight", Shape{out, in, kernel}, in * kernel, rng)),
      bias(params.add_uniform(name + ".bias", Shape{out}, in * kernel, rng)),
      dilation(dilation_) {}

ad::Var Conv::operator()(const ad::Var& x) const {
  return ad::add_channel_bias(ad::conv1d(x, weight, dilation), bias);
}

LayerNorm::LayerNorm(ParamSet& params, const std::string& name, std::size_t channels)
    : gain(params.add_filled(name + ".gain", Shape{channels}, 1.0)),
      shift(params.add_zeros(name + ".shift", Shape{channels})) {}

ad::Var LayerNorm::operator()(const ad::Var& x) const {
  return ad::add(ad::mul(ad::layer_norm_rows(x), gain), shift);
}

void zero_fill(ad::Var& param) {
  for (double& v : param.mutable_value().data()) v = 0.0;
}

}  // namespace shallowdiff
