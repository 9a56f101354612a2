#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "rtx/image.hpp"
#include "rtx/random.hpp"
#include "rtx/tensor.hpp"

namespace rtx::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rtx_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image im(h, w);
  for (double& v : im.data()) v = rng.uniform();
  return im;
}

inline ThermalImage random_thermal(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ThermalImage im(h, w);
  for (double& v : im.data()) v = rng.uniform();
  return im;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                            double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

/// Smooth colour pattern whose three channels are functions of one scalar
/// field; `thermal_of` returns that field.
inline double pattern_field(int y, int x, int k) {
  return 0.5 + 0.35 * std::sin(0.19 * x + 0.11 * y + 1.7 * k) * std::cos(0.07 * x - 0.23 * y);
}

inline Image pattern_image(int size, int k) {
  Image im(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = pattern_field(y, x, k);
      im.at(y, x, 0) = t;
      im.at(y, x, 1) = 0.2 + 0.6 * t * t;
      im.at(y, x, 2) = 0.9 - 0.7 * t;
    }
  }
  return im;
}

inline ThermalImage pattern_thermal(int size, int k) {
  ThermalImage im(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) im.at(y, x) = pattern_field(y, x, k);
  }
  return im;
}

}  // namespace rtx::test
