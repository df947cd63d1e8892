#pragma once

#include <vector>

#include "shallowdiff/params.hpp"

namespace shallowdiff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<Array> m;
  std::vector<Array> v;
};

/// One bias-corrected Adam update over every parameter in `params`, using the
/// gradients currently stored on them. Throws before touching anything if a
/// gradient is non-finite.
void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config);

class Adam {
 public:
  Adam(ParamSet& params, AdamConfig config) : params_(params), config_(config) {}

  void step() { adam_step(params_, state_, config_); }
  void zero_grad() { params_.zero_grad(); }
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  const AdamState& state() const { return state_; }

 private:
  ParamSet& params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace shallowdiff
