#pragma once

// Central finite-difference checks against ad::backward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "shallowdiff/autodiff.hpp"
#include "shallowdiff/params.hpp"
#include "shallowdiff/rng.hpp"

namespace shallowdiff::testing {

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;  // "input[i]" of the worst element
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps round-off on vanishing
/// gradients from dominating.
inline double rel_error(double analytic, double numeric, double floor = 1e-5) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

/// `inputs` are parameter leaves read by `loss`. When `max_per_input` is
/// nonzero only that many evenly spread elements of each input are probed.
inline GradReport gradcheck(std::vector<ad::Var> inputs, const std::function<ad::Var()>& loss,
                            std::size_t max_per_input = 0, double h = 1e-5,
                            const std::vector<std::string>& names = {}) {
  for (auto& v : inputs) v.zero_grad();
  const ad::Var out = loss();
  ad::backward(out);
  std::vector<Array> analytic;
  for (const auto& v : inputs) analytic.push_back(v.grad());

  GradReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Array& x = inputs[k].mutable_value();
    const std::size_t n = x.size();
    const std::size_t stride = (max_per_input == 0 || n <= max_per_input) ? 1 : n / max_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = loss().value().item();
      x[i] = saved - h;
      const double down = loss().value().item();
      x[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = rel_error(analytic[k][i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = (k < names.size() ? names[k] : "input" + std::to_string(k)) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

inline GradReport gradcheck(ParamSet& params, const std::function<ad::Var()>& loss, std::size_t max_per_input = 0,
                            double h = 1e-5) {
  std::vector<ad::Var> vars;
  std::vector<std::string> names;
  for (auto& e : params.entries()) {
    vars.push_back(e.var);
    names.push_back(e.name);
  }
  return gradcheck(vars, loss, max_per_input, h, names);
}

inline Array random_array(Shape shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (auto& v : a.data()) v = scale * rng.normal();
  return a;
}

/// Random values kept at least `gap` away from zero, for ops with a kink there.
inline Array random_away_from_zero(Shape shape, Rng& rng, double gap = 0.1) {
  Array a(std::move(shape));
  for (auto& v : a.data()) {
    const double z = rng.normal();
    v = z >= 0 ? z + gap : z - gap;
  }
  return a;
}

}  // namespace shallowdiff::testing
