#include "shallowdiff/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace shallowdiff {

void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.var.shape());
      state.v.emplace_back(e.var.shape());
    }
  }
  if (state.m.size() != entries.size()) throw std::invalid_argument("Adam state does not match parameter count");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].shape() != entries[i].var.shape()) {
      throw std::invalid_argument("Adam state shape mismatch for parameter " + entries[i].name);
    }
    if (!entries[i].var.grad().all_finite()) {
      throw std::domain_error("non-finite gradient in parameter " + entries[i].name);
    }
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto w = entries[i].var.mutable_value().data();
    const auto g = entries[i].var.grad().data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace shallowdiff
