#pragma once

#include <cstddef>
#include <string>

#include "shallowdiff/autodiff.hpp"
#include "shallowdiff/params.hpp"

namespace shallowdiff {

/// Transformer positional table [length x channels]: sin on even columns,
/// cos on odd columns.
Array sinusoidal_positions(std::size_t length, std::size_t channels);

/// Step encoding [channels]: first half sin(t f_j), second half cos(t f_j)
/// with a geometric frequency ladder from 1 down to 1/10000.
Array sinusoidal_step(int t, std::size_t channels);

/// Row-major affine map: [n x in] -> [n x out].
struct Linear {
  Linear() = default;
  Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;

  ad::Var weight;  // [in x out]
  ad::Var bias;    // [out]
};

/// Channel-major same-padded convolution: [in x L] -> [out x L].
struct Conv {
  Conv() = default;
  Conv(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
       std::size_t dilation = 1);
  ad::Var operator()(const ad::Var& x) const;

  ad::Var weight;  // [out x in x kernel]
  ad::Var bias;    // [out]
  std::size_t dilation = 1;
};

/// Row-wise layer normalization with learned gain and shift.
struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamSet& params, const std::string& name, std::size_t channels);
  ad::Var operator()(const ad::Var& x) const;

  ad::Var gain;
  ad::Var shift;
};

/// Overwrites a parameter with zeros (used to zero-init output projections).
void zero_fill(ad::Var& param);

}  // namespace shallowdiff
