#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rtx/errors.hpp"

namespace rtx {

/// Row-major, channel-last raster of doubles in [0, 1].
///
/// `Raster<3>` is an RGB frame, `Raster<1>` a thermal frame. Construction does
/// not validate; call `validate()` (or use `make_validated`) at I/O boundaries.
template <int Channels>
class Raster {
 public:
  static constexpr int kChannels = Channels;

  Raster() = default;
  Raster(int height, int width, double fill = 0.0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width * Channels, fill) {
    if (height < 0 || width < 0) throw ShapeError("negative raster size");
  }
  Raster(int height, int width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(height) * width * Channels) {
      throw ShapeError("raster data size does not match " + std::to_string(height) + "x" +
                       std::to_string(width) + "x" + std::to_string(Channels));
    }
  }

  static Raster make_validated(int height, int width, std::vector<double> data) {
    Raster r(height, width, std::move(data));
    r.validate();
    return r;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return Channels; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int h, int w, int c = 0) {
    return data_[(static_cast<std::size_t>(h) * width_ + w) * Channels + c];
  }
  double at(int h, int w, int c = 0) const {
    return data_[(static_cast<std::size_t>(h) * width_ + w) * Channels + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  template <int Other>
  bool same_shape(const Raster<Other>& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  /// Throws FormatError if any element is non-finite or outside [0, 1].
  void validate() const {
    for (double v : data_) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw FormatError("raster value out of [0,1] or non-finite: " + std::to_string(v));
      }
    }
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

using Image = Raster<3>;
using ThermalImage = Raster<1>;

/// Smallest frame the network accepts.
inline constexpr int kMinImageSide = 8;

}  // namespace rtx
