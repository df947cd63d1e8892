#include "shallowdiff/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace shallowdiff {

ad::Var ParamSet::add(std::string name, Array init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto var = ad::Var::parameter(std::move(init));
  entries_.push_back({std::move(name), var});
  return var;
}

ad::Var ParamSet::add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Array init(std::move(shape));
  for (double& v : init.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return add(std::move(name), std::move(init));
}

ad::Var ParamSet::add_zeros(std::string name, Shape shape) { return add(std::move(name), Array(std::move(shape))); }

ad::Var ParamSet::add_filled(std::string name, Shape shape, double value) {
  return add(std::move(name), Array(std::move(shape), value));
}

const ad::Var& ParamSet::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.var;
  throw std::out_of_range("no parameter named " + name);
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

void ParamSet::assign(const std::vector<std::pair<std::string, Array>>& values) {
  std::unordered_map<std::string, const Array*> by_name;
  for (const auto& [name, value] : values) by_name[name] = &value;
  for (auto& e : entries_) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw std::invalid_argument("checkpoint is missing parameter " + e.name);
    if (it->second->shape() != e.var.shape()) {
      throw std::invalid_argument("parameter " + e.name + " has shape " + shape_string(e.var.shape()) +
                                  " but checkpoint holds " + shape_string(it->second->shape()));
    }
    e.var.mutable_value() = *it->second;
  }
  if (by_name.size() != entries_.size()) throw std::invalid_argument("checkpoint holds parameters this model does not have");
}

std::vector<std::pair<std::string, Array>> ParamSet::snapshot() const {
  std::vector<std::pair<std::string, Array>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.name, e.var.value());
  return out;
}

}  // namespace shallowdiff
