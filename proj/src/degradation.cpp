#include "rtx/degradation.hpp"

#include <algorithm>
#include <string>

namespace rtx {

void DegradeParams::validate() const {
  if (!(exposure_factor >= 1.0 && exposure_factor <= 100.0)) {
    throw ParameterError("exposure_factor must lie in [1, 100], got " +
                         std::to_string(exposure_factor));
  }
  if (!(shot_coeff >= 0.0)) throw ParameterError("shot_coeff must be >= 0");
  if (!(read_coeff >= 0.0)) throw ParameterError("read_coeff must be >= 0");
}

Image degrade(const Image& img, const DegradeParams& p) {
  p.validate();
  Image out(img.height(), img.width());
  const CounterRng noise(p.seed, p.image_index);
  const bool noisy = p.shot_coeff > 0.0 || p.read_coeff > 0.0;
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double signal = src[i] / p.exposure_factor;
    double v = signal;
    if (noisy) {
      const double variance = std::max(0.0, p.shot_coeff * signal + p.read_coeff);
      v += std::sqrt(variance) * noise.normal(i);
    }
    dst[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double sample_exposure_factor(Rng& rng, double low, double high) {
  if (!(low < high)) {
    throw ParameterError("exposure interval is empty: [" + std::to_string(low) + ", " +
                         std::to_string(high) + "]");
  }
  return low + (high - low) * rng.uniform();
}

}  // namespace rtx
