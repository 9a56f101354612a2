#pragma once

#include <cstdint>
#include <filesystem>

#include "rtx/image.hpp"

namespace rtx {

/// Decoded PNG samples before normalisation.
struct PngRaster {
  int height = 0;
  int width = 0;
  int channels = 0;   // 1, 2, 3 or 4 as stored in the file
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;  // row-major, channel-last
};

PngRaster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngRaster& raster);

/// Loads an 8- or 16-bit 3-channel PNG; sample p of depth b maps to p / (2^b - 1).
Image load_rgb(const std::filesystem::path& path);

/// Loads a single-channel PNG. A 3-channel file is accepted when its channels
/// differ by at most one LSB at every pixel; the channels are then averaged.
ThermalImage load_thermal(const std::filesystem::path& path);

/// Quantises with clamp then round-half-up of p * 255 to an 8-bit PNG.
void save_image(const Image& img, const std::filesystem::path& path);
void save_image(const ThermalImage& img, const std::filesystem::path& path);

/// Round-half-up 8-bit quantisation used by `save_image`.
std::uint8_t quantize_u8(double v);

}  // namespace rtx
