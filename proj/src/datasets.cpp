#include "rtx/datasets.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rtx/imageio.hpp"

namespace rtx {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSingularDet = 1e-12;

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
  return s;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  if (p.empty()) return {};
  const fs::path rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

std::string row_label(std::size_t line, const std::string& id) {
  return "manifest line " + std::to_string(line) + (id.empty() ? "" : " (id '" + id + "')");
}

}  // namespace

double determinant(const Homography& h) {
  return h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
         h[2] * (h[3] * h[7] - h[4] * h[6]);
}

Homography invert(const Homography& h) {
  const double det = determinant(h);
  if (!(std::abs(det) > kSingularDet)) throw ParameterError("homography is singular");
  const double inv = 1.0 / det;
  return {(h[4] * h[8] - h[5] * h[7]) * inv, (h[2] * h[7] - h[1] * h[8]) * inv,
          (h[1] * h[5] - h[2] * h[4]) * inv, (h[5] * h[6] - h[3] * h[8]) * inv,
          (h[0] * h[8] - h[2] * h[6]) * inv, (h[2] * h[3] - h[0] * h[5]) * inv,
          (h[3] * h[7] - h[4] * h[6]) * inv, (h[1] * h[6] - h[0] * h[7]) * inv,
          (h[0] * h[4] - h[1] * h[3]) * inv};
}

Homography identity_homography() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

void Manifest::validate() const {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = "manifest row " + std::to_string(i) + " (id '" + r.id + "')";
    if (r.id.empty()) throw ValidationError(where + ": empty id");
    if (!seen.insert(r.id).second) throw ValidationError(where + ": duplicate id");
    if (r.rgb_low.empty() || r.thermal.empty() || r.rgb_ref.empty()) {
      throw ValidationError(where + ": empty path");
    }
    if (r.homography && !(std::abs(determinant(*r.homography)) > kSingularDet)) {
      throw ValidationError(where + ": homography is singular");
    }
  }
}

Manifest parse_manifest(const std::string& text, const fs::path& base_dir) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(row_label(lineno, "") + ": " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(row_label(lineno, "") + ": not an object");

    if (!have_header) {
      if (!obj.contains("format_version")) {
        throw ValidationError(row_label(lineno, "") + ": missing header with format_version");
      }
      if (obj["format_version"] != kManifestVersion) {
        throw ValidationError("unsupported manifest format_version " + obj["format_version"].dump());
      }
      m.split = obj.value("split", "train");
      have_header = true;
      continue;
    }

    ManifestRow row;
    const std::string id = obj.contains("id") && obj["id"].is_string() ? obj["id"].get<std::string>() : "";
    const std::string where = row_label(lineno, id);
    for (const char* field : {"id", "rgb_low", "thermal", "rgb_ref"}) {
      if (!obj.contains(field) || !obj[field].is_string() || obj[field].get<std::string>().empty()) {
        throw ValidationError(where + ": missing or empty field '" + field + "'");
      }
    }
    row.id = id;
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate id");
    row.rgb_low = resolve(base_dir, obj["rgb_low"]);
    row.thermal = resolve(base_dir, obj["thermal"]);
    row.rgb_ref = resolve(base_dir, obj["rgb_ref"]);
    if (obj.contains("homography") && !obj["homography"].is_null()) {
      const json& h = obj["homography"];
      if (!h.is_array() || h.size() != 9) {
        throw ValidationError(where + ": homography must be 9 numbers, row-major");
      }
      Homography hm{};
      for (std::size_t i = 0; i < 9; ++i) {
        if (!h[i].is_number()) throw ValidationError(where + ": homography entry is not a number");
        hm[i] = h[i].get<double>();
      }
      if (!(std::abs(determinant(hm)) > kSingularDet)) {
        throw ValidationError(where + ": homography is singular");
      }
      row.homography = hm;
    }
    if (obj.contains("exposure_factor") && !obj["exposure_factor"].is_null()) {
      if (!obj["exposure_factor"].is_number()) {
        throw ValidationError(where + ": exposure_factor must be a number");
      }
      row.exposure_factor = obj["exposure_factor"].get<double>();
    }
    if (obj.contains("tags")) {
      if (!obj["tags"].is_object()) throw ValidationError(where + ": tags must be an object");
      for (const auto& [k, v] : obj["tags"].items()) {
        row.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    m.rows.push_back(std::move(row));
  }
  if (!have_header) throw ValidationError("manifest is empty: missing header line");
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), fs::absolute(path).parent_path());
}

void write_manifest(const fs::path& path, const Manifest& m) {
  m.validate();
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << json{{"format_version", kManifestVersion}, {"split", m.split}}.dump() << '\n';
  for (const auto& r : m.rows) {
    json obj = json::object();
    obj["id"] = r.id;
    obj["rgb_low"] = relative_to(base, r.rgb_low);
    obj["thermal"] = relative_to(base, r.thermal);
    obj["rgb_ref"] = relative_to(base, r.rgb_ref);
    if (r.homography) obj["homography"] = *r.homography;
    if (r.exposure_factor) obj["exposure_factor"] = *r.exposure_factor;
    if (!r.tags.empty()) obj["tags"] = r.tags;
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("short write on manifest " + path.string());
}

WarpResult warp_homography(const ThermalImage& t, const Homography& h, int out_height,
                           int out_width) {
  const Homography inv = invert(h);
  WarpResult r{ThermalImage(out_height, out_width), ThermalImage(out_height, out_width)};
  const int H = t.height(), W = t.width();
  constexpr double tol = 1e-9;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const double wx = inv[0] * x + inv[1] * y + inv[2];
      const double wy = inv[3] * x + inv[4] * y + inv[5];
      const double wz = inv[6] * x + inv[7] * y + inv[8];
      if (std::abs(wz) < 1e-15) continue;
      double sx = wx / wz, sy = wy / wz;
      if (!(sx >= -tol && sx <= W - 1 + tol && sy >= -tol && sy <= H - 1 + tol)) continue;
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      const int x0 = std::min(static_cast<int>(std::floor(sx)), std::max(W - 2, 0));
      const int y0 = std::min(static_cast<int>(std::floor(sy)), std::max(H - 2, 0));
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - x0, fy = sy - y0;
      double v = (1 - fy) * ((1 - fx) * t.at(y0, x0) + (fx ? fx * t.at(y0, x1) : 0.0));
      if (fy) v += fy * ((1 - fx) * t.at(y1, x0) + (fx ? fx * t.at(y1, x1) : 0.0));
      r.image.at(y, x) = v;
      r.mask.at(y, x) = 1.0;
    }
  }
  return r;
}

fs::path mask_path_for(const fs::path& image_path) {
  fs::path p = image_path;
  p.replace_filename(image_path.stem().string() + "_mask" + image_path.extension().string());
  return p;
}

void save_warped(const WarpResult& w, const fs::path& path) {
  save_image(w.image, path);
  save_image(w.mask, mask_path_for(path));
}

std::size_t count_exposures(const fs::path& scene_dir, const std::string& gain,
                            const StackLayout& layout) {
  const fs::path dir = scene_dir / replace_all(layout.gain_dir, "{gain}", gain);
  std::size_t k = 0;
  while (fs::exists(dir / replace_all(layout.exposure_file, "{k}", std::to_string(k)))) ++k;
  return k;
}

ManifestRow pair_exposure_stack(const fs::path& scene_dir, const std::string& gain,
                                std::size_t input_index, std::size_t reference_index,
                                const StackLayout& layout) {
  if (gain.empty()) throw ParameterError("gain level must be non-empty");
  const std::size_t n = count_exposures(scene_dir, gain, layout);
  if (n < layout.min_exposures) {
    throw ValidationError(scene_dir.string() + ": gain '" + gain + "' has " + std::to_string(n) +
                          " exposures, expected at least " + std::to_string(layout.min_exposures));
  }
  for (std::size_t idx : {input_index, reference_index}) {
    if (idx >= n) {
      throw RangeError("exposure index " + std::to_string(idx) + " is outside the " +
                       std::to_string(n) + "-exposure stack of " + scene_dir.string());
    }
  }
  if (input_index == reference_index) {
    throw ParameterError("input and reference exposure indices must differ");
  }
  const fs::path dir = scene_dir / replace_all(layout.gain_dir, "{gain}", gain);
  const fs::path thermal = scene_dir / layout.thermal_file;
  if (!fs::exists(thermal)) throw ValidationError("missing thermal frame " + thermal.string());

  ManifestRow row;
  const std::string scene = scene_dir.filename().empty() ? scene_dir.parent_path().filename().string()
                                                         : scene_dir.filename().string();
  row.id = scene + "_" + gain + "_e" + std::to_string(input_index) + "_e" +
           std::to_string(reference_index);
  const auto file = [&](std::size_t k) {
    return fs::absolute(dir / replace_all(layout.exposure_file, "{k}", std::to_string(k)))
        .lexically_normal();
  };
  row.rgb_low = file(input_index);
  row.rgb_ref = file(reference_index);
  row.thermal = fs::absolute(thermal).lexically_normal();
  row.tags["gain"] = gain;
  row.tags["input_exposure"] = std::to_string(input_index);
  row.tags["reference_exposure"] = std::to_string(reference_index);
  return row;
}

}  // namespace rtx
