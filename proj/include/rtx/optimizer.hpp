#pragma once

#include <cstdint>
#include <vector>

#include "rtx/parameters.hpp"

namespace rtx {

struct AdamHyper {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient; off by default
};

/// First/second moments per parameter entry, aligned with the store order.
struct AdamState {
  std::vector<AlignedValues> m;
  std::vector<AlignedValues> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ParameterStore& store);
  bool empty() const { return m.empty(); }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update of every entry in `store` using its gradient.
/// Throws TrainingAbort naming the first parameter with a non-finite gradient;
/// nothing is modified in that case.
void adam_step(ParameterStore& store, AdamState& state, const AdamHyper& hp);

}  // namespace rtx
