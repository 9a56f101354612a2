#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtx/random.hpp"
#include "rtx/tensor.hpp"

namespace rtx {

/// One named trainable tensor with its gradient slot.
struct ParameterEntry {
  std::string name;
  std::vector<int> shape;
  AlignedValues values;
  AlignedValues grad;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const ParameterEntry&, const ParameterEntry&) = default;
};

/// Ordered, name-unique collection of every trainable tensor.
///
/// Weights of shape [out, in] are stored row-major and exposed as Eigen maps.
/// Indices returned by `add` are stable for the lifetime of the store.
class ParameterStore {
 public:
  std::size_t add(const std::string& name, std::vector<int> shape);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;

  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  ParameterEntry& entry(std::size_t i) { return entries_.at(i); }
  const ParameterEntry& entry(std::size_t i) const { return entries_.at(i); }
  ParameterEntry& entry(const std::string& name) { return entries_[index_of(name)]; }
  const ParameterEntry& entry(const std::string& name) const { return entries_[index_of(name)]; }
  const std::vector<ParameterEntry>& entries() const { return entries_; }

  /// 2-D views; 1-D entries are viewed as a column.
  WeightMap value_matrix(std::size_t i);
  ConstWeightMap value_matrix(std::size_t i) const;
  WeightMap grad_matrix(std::size_t i);
  Eigen::Map<Vector> value_vector(std::size_t i);
  Eigen::Map<const Vector> value_vector(std::size_t i) const;
  Eigen::Map<Vector> grad_vector(std::size_t i);

  void zero_grad();
  bool all_finite() const;

  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
  void init_uniform(std::size_t i, double fan_in, Rng& rng);
  void fill(std::size_t i, double v);

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<ParameterEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rtx
