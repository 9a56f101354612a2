#include "rtx/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rtx {
namespace {

std::pair<Eigen::Index, Eigen::Index> as_2d(const ParameterEntry& e) {
  if (e.shape.size() == 2) return {e.shape[0], e.shape[1]};
  return {static_cast<Eigen::Index>(e.values.size()), 1};
}

}  // namespace

std::size_t ParameterStore::add(const std::string& name, std::vector<int> shape) {
  if (name.empty()) throw ParameterError("parameter name must be non-empty");
  if (contains(name)) throw ParameterError("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("parameter " + name + " has a non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  entries_.push_back({name, std::move(shape), AlignedValues(n, 0.0),
                      AlignedValues(n, 0.0)});
  index_.emplace(name, entries_.size() - 1);
  return entries_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("no parameter named " + name);
  return it->second;
}

std::size_t ParameterStore::total_size() const {
  return std::accumulate(entries_.begin(), entries_.end(), std::size_t{0},
                         [](std::size_t acc, const ParameterEntry& e) { return acc + e.size(); });
}

WeightMap ParameterStore::value_matrix(std::size_t i) {
  auto& e = entries_.at(i);
  const auto [r, c] = as_2d(e);
  return WeightMap(e.values.data(), r, c);
}

ConstWeightMap ParameterStore::value_matrix(std::size_t i) const {
  const auto& e = entries_.at(i);
  const auto [r, c] = as_2d(e);
  return ConstWeightMap(e.values.data(), r, c);
}

WeightMap ParameterStore::grad_matrix(std::size_t i) {
  auto& e = entries_.at(i);
  const auto [r, c] = as_2d(e);
  return WeightMap(e.grad.data(), r, c);
}

Eigen::Map<Vector> ParameterStore::value_vector(std::size_t i) {
  auto& e = entries_.at(i);
  return Eigen::Map<Vector>(e.values.data(), static_cast<Eigen::Index>(e.values.size()));
}

Eigen::Map<const Vector> ParameterStore::value_vector(std::size_t i) const {
  const auto& e = entries_.at(i);
  return Eigen::Map<const Vector>(e.values.data(), static_cast<Eigen::Index>(e.values.size()));
}

Eigen::Map<Vector> ParameterStore::grad_vector(std::size_t i) {
  auto& e = entries_.at(i);
  return Eigen::Map<Vector>(e.grad.data(), static_cast<Eigen::Index>(e.grad.size()));
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

bool ParameterStore::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const ParameterEntry& e) {
    return std::all_of(e.values.begin(), e.values.end(), [](double v) { return std::isfinite(v); });
  });
}

void ParameterStore::init_uniform(std::size_t i, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  for (double& v : entries_.at(i).values) v = bound * (2.0 * rng.uniform() - 1.0);
}

void ParameterStore::fill(std::size_t i, double v) {
  auto& vals = entries_.at(i).values;
  std::fill(vals.begin(), vals.end(), v);
}

}  // namespace rtx
