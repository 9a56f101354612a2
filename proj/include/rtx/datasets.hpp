#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtx/image.hpp"

namespace rtx {

inline constexpr int kManifestVersion = 1;

/// Row-major 3x3 matrix mapping thermal pixel coordinates (x, y, 1) to RGB
/// pixel coordinates.
using Homography = std::array<double, 9>;

double determinant(const Homography& h);
Homography invert(const Homography& h);
Homography identity_homography();

struct ManifestRow {
  std::string id;
  std::filesystem::path rgb_low;
  std::filesystem::path thermal;
  std::filesystem::path rgb_ref;
  std::optional<Homography> homography;
  std::optional<double> exposure_factor;
  std::map<std::string, std::string> tags;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
  std::string split = "train";
  std::vector<ManifestRow> rows;

  /// Throws ValidationError naming the offending row.
  void validate() const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// JSON Lines: a header object `{"format_version": 1, "split": ...}` followed
/// by one object per row. Relative paths resolve against the manifest's
/// directory; the in-memory manifest holds normalised absolute paths.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);

/// Paths are written relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Elements at indices 0, stride, 2*stride, ...
template <typename T>
std::vector<T> select_subset(const std::vector<T>& items, std::size_t stride) {
  if (stride == 0) throw ParameterError("select_subset: stride must be >= 1");
  std::vector<T> out;
  out.reserve((items.size() + stride - 1) / stride);
  for (std::size_t i = 0; i < items.size(); i += stride) out.push_back(items[i]);
  return out;
}

struct WarpResult {
  ThermalImage image;
  ThermalImage mask;  // 1 where the source was sampled, 0 where filled
};

/// Inverse warp with bilinear sampling: output pixel p samples the input at
/// H^-1 p. Samples outside the input are 0 and marked invalid in the mask.
WarpResult warp_homography(const ThermalImage& t, const Homography& h, int out_height,
                           int out_width);

/// Writes the warped frame and `<stem>_mask.png` beside it.
void save_warped(const WarpResult& w, const std::filesystem::path& path);
std::filesystem::path mask_path_for(const std::filesystem::path& image_path);

/// Directory layout of an exposure-stack scene. `{gain}` and `{k}` are
/// substituted; the defaults describe
/// `scene_<id>/gain_<low|high>/exp_<k>.png` plus `scene_<id>/thermal.png`.
struct StackLayout {
  std::string gain_dir = "gain_{gain}";
  std::string exposure_file = "exp_{k}.png";
  std::string thermal_file = "thermal.png";
  std::size_t min_exposures = 5;
};

/// Number of consecutive exposures exp_0, exp_1, ... present for `gain`.
std::size_t count_exposures(const std::filesystem::path& scene_dir, const std::string& gain,
                            const StackLayout& layout = {});

/// Pairs a low-exposure input with a reference exposure of the same scene and
/// gain. Indices are 0-based; an index past the stack is a RangeError.
ManifestRow pair_exposure_stack(const std::filesystem::path& scene_dir, const std::string& gain,
                                std::size_t input_index, std::size_t reference_index,
                                const StackLayout& layout = {});

}  // namespace rtx
