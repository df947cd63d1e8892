#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "shallowdiff/autodiff.hpp"
#include "shallowdiff/rng.hpp"

namespace shallowdiff {

/// Ordered, named collection of trainable leaves. Order is insertion order and
/// is what checkpoints and the optimizer iterate over.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
  };

  ad::Var add(std::string name, Array init);
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  ad::Var add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  ad::Var add_zeros(std::string name, Shape shape);
  ad::Var add_filled(std::string name, Shape shape, double value);

  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  /// Copies values by name; shapes must match and every name must be present.
  void assign(const std::vector<std::pair<std::string, Array>>& values);
  std::vector<std::pair<std::string, Array>> snapshot() const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace shallowdiff
