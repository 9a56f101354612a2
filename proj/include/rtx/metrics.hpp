#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rtx/datasets.hpp"
#include "rtx/image.hpp"

namespace rtx {

/// 10 log10(1 / MSE); +infinity when the images are identical.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM with a Gaussian window over every fully contained
/// window position, computed per channel and averaged over channels.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});
/// Single-channel variant on raw planes (row-major, height x width).
double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int height,
                  int width, const SsimOptions& opts = {});

struct EvalRow {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  bool failed = false;
  std::string error;
};

struct EvalReport {
  std::string method;
  std::string config_hash;
  std::vector<EvalRow> rows;
  double mean_psnr_db = std::numeric_limits<double>::quiet_NaN();
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();
  std::size_t excluded_infinite = 0;

  /// Means over non-failed rows; infinite PSNRs are excluded from the PSNR mean.
  void compute_means();
  /// `# method:` and `# config_hash:` lines, the header
  /// `id,psnr_db,ssim,lpips`, one row per image, then a `mean` row. The
  /// lpips column is left empty.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

using Enhancer = std::function<Image(const Image& rgb, const ThermalImage& thermal)>;

/// Enhances every row at full resolution and scores it against the reference.
/// Rows that cannot be loaded or processed are recorded as failed.
EvalReport evaluate(const Manifest& manifest, const Enhancer& enhance, const std::string& method,
                    const std::string& config_hash);

/// Formats a value the way reports do ("inf" for the identical-image sentinel).
std::string format_metric(double v);

}  // namespace rtx
