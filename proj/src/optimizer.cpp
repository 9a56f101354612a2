#include "rtx/optimizer.hpp"

#include <cmath>
#include <string>

namespace rtx {

AdamState AdamState::zeros_like(const ParameterStore& store) {
  AdamState s;
  for (const auto& e : store.entries()) {
    s.m.emplace_back(e.size(), 0.0);
    s.v.emplace_back(e.size(), 0.0);
  }
  return s;
}

void adam_step(ParameterStore& store, AdamState& state, const AdamHyper& hp) {
  if (state.empty()) state = AdamState::zeros_like(store);
  if (state.m.size() != store.count()) throw ShapeError("Adam state does not match parameters");

  for (const auto& e : store.entries()) {
    for (std::size_t j = 0; j < e.grad.size(); ++j) {
      if (!std::isfinite(e.grad[j])) {
        throw TrainingAbort("non-finite gradient in parameter '" + e.name + "' at element " +
                            std::to_string(j));
      }
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& e = store.entry(i);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < e.values.size(); ++j) {
      const double g = e.grad[j] + hp.weight_decay * e.values[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      e.values[j] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

}  // namespace rtx
