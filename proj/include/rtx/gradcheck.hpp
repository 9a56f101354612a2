#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtx/model.hpp"
#include "rtx/parameters.hpp"

namespace rtx {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Gradient magnitudes below this are compared absolutely: the relative
  /// error denominator is max(|analytic|, |numeric|, abs_floor). Central
  /// differences of the probe loss resolve about 1e-12 in absolute terms.
  double abs_floor = 1e-7;
  /// Entries checked per named parameter; 0 checks every entry. Larger
  /// tensors are sampled without replacement.
  std::size_t entries_per_parameter = 0;
  /// Also compare the directional derivative along a random unit-norm +-1/sqrt(n) direction
  /// over the whole tensor.
  bool directional = true;
  std::uint64_t seed = 7;
  int height = 8;
  int width = 8;
  /// Attention block whose backward is deliberately corrupted (fault injection).
  std::optional<std::string> fault_block;
};

struct GradCheckRow {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double worst_analytic = 0.0;  // the pair behind max_rel_error
  double worst_numeric = 0.0;
  double directional_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
  std::string to_text() const;
};

/// Central-difference check of `analytic` (fills store gradients) against
/// `loss` for every entry of `store`.
GradCheckReport gradient_check(ParameterStore& store, const std::function<double()>& loss,
                               const std::function<void()>& analytic,
                               const GradCheckOptions& opts);

/// Full-network check of L = sum(w .* output) on a random H x W RGB/thermal
/// pair with random weights w. Every
/// parameter (including the zero-initialised head) is randomised first so no
/// gradient path is trivially zero.
GradCheckReport gradient_check_model(const ModelConfig& cfg, const GradCheckOptions& opts);

/// Re-draws every parameter with small random values, including those the
/// standard initialisation sets to constants.
void randomize_parameters(ParameterStore& store, std::uint64_t seed);

}  // namespace rtx
