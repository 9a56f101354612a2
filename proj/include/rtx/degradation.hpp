#pragma once

#include <cstdint>

#include "rtx/image.hpp"
#include "rtx/random.hpp"

namespace rtx {

/// Low-exposure simulation: out = clamp(img / exposure_factor + n, 0, 1) with
/// n ~ N(0, shot_coeff * img / exposure_factor + read_coeff).
struct DegradeParams {
  double exposure_factor = 1.0;  // [1, 100]
  double shot_coeff = 0.01;
  double read_coeff = 1e-4;
  std::uint64_t seed = 0;
  std::uint64_t image_index = 0;  // keys the noise stream together with `seed`

  void validate() const;
};

inline constexpr double kDefaultShotCoeff = 0.01;
inline constexpr double kDefaultReadCoeff = 1e-4;
inline constexpr double kExposureLow = 5.0;
inline constexpr double kExposureHigh = 20.0;

Image degrade(const Image& img, const DegradeParams& p);

/// Uniform draw in [low, high]. Throws ParameterError when low >= high.
double sample_exposure_factor(Rng& rng, double low = kExposureLow, double high = kExposureHigh);

}  // namespace rtx
