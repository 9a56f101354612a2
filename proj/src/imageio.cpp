#include "rtx/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace rtx {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

double normalise(std::uint16_t sample, int bit_depth) {
  const double full = bit_depth == 16 ? 65535.0 : 255.0;
  return static_cast<double>(sample) / full;
}

}  // namespace

PngRaster read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }

  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  PngRaster out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed for " + path.string() + ": " + err);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else {
    // Row padding is zero for 8-bit depth, so the buffer is contiguous.
    std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n), out.samples.begin());
  }
  return out;
}

void write_png(const std::filesystem::path& path, const PngRaster& raster) {
  if (raster.bit_depth != 8 && raster.bit_depth != 16) {
    throw FormatError("unsupported bit depth " + std::to_string(raster.bit_depth));
  }
  int color_type = 0;
  switch (raster.channels) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 2: color_type = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw FormatError("unsupported channel count " + std::to_string(raster.channels));
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing " + path.string());

  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  const int bytes = raster.bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(raster.width) * raster.channels * bytes;
  std::vector<png_byte> buffer(rowbytes * raster.height);
  for (std::size_t i = 0; i < raster.samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<png_byte>(raster.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(raster.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(raster.samples[i]);
    }
  }
  std::vector<png_bytep> rows(raster.height);
  for (int y = 0; y < raster.height; ++y) rows[y] = buffer.data() + y * rowbytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed for " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, raster.width, raster.height, raster.bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);

  if (std::fflush(fp.get()) != 0) throw IoError("write failed for " + path.string());
}

Image load_rgb(const std::filesystem::path& path) {
  const PngRaster raw = read_png(path);
  if (raw.channels != 3) {
    throw FormatError(path.string() + ": expected 3 channels, found " +
                      std::to_string(raw.channels));
  }
  std::vector<double> data(raw.samples.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = normalise(raw.samples[i], raw.bit_depth);
  return Image(raw.height, raw.width, std::move(data));
}

ThermalImage load_thermal(const std::filesystem::path& path) {
  const PngRaster raw = read_png(path);
  const std::size_t pixels = static_cast<std::size_t>(raw.width) * raw.height;
  std::vector<double> data(pixels);
  if (raw.channels == 1) {
    for (std::size_t i = 0; i < pixels; ++i) data[i] = normalise(raw.samples[i], raw.bit_depth);
  } else if (raw.channels == 3) {
    for (std::size_t i = 0; i < pixels; ++i) {
      const std::uint16_t r = raw.samples[3 * i], g = raw.samples[3 * i + 1],
                          b = raw.samples[3 * i + 2];
      const auto [lo, hi] = std::minmax({r, g, b});
      if (hi - lo > 1) {
        throw FormatError(path.string() + ": 3-channel thermal frame is not grayscale at pixel " +
                          std::to_string(i));
      }
      const double mean = (static_cast<double>(r) + g + b) / 3.0;
      data[i] = mean / (raw.bit_depth == 16 ? 65535.0 : 255.0);
    }
  } else {
    throw FormatError(path.string() + ": thermal frame must have 1 or 3 channels, found " +
                      std::to_string(raw.channels));
  }
  return ThermalImage(raw.height, raw.width, std::move(data));
}

std::uint8_t quantize_u8(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

namespace {
template <int C>
void save_raster(const Raster<C>& img, const std::filesystem::path& path) {
  PngRaster raw;
  raw.height = img.height();
  raw.width = img.width();
  raw.channels = C;
  raw.bit_depth = 8;
  raw.samples.resize(img.size());
  const auto src = img.data();
  for (std::size_t i = 0; i < src.size(); ++i) raw.samples[i] = quantize_u8(src[i]);
  write_png(path, raw);
}
}  // namespace

void save_image(const Image& img, const std::filesystem::path& path) { save_raster(img, path); }
void save_image(const ThermalImage& img, const std::filesystem::path& path) {
  save_raster(img, path);
}

}  // namespace rtx
