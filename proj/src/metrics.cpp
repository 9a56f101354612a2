#include "rtx/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rtx/imageio.hpp"
#include "rtx/training.hpp"

namespace rtx {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
  const auto x = a.data(), y = b.data();
  if (x.empty()) throw ShapeError("psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of a row-major plane.
std::vector<double> filter_valid(const std::vector<double>& in, int H, int W,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = H - n + 1, ow = W - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(H) * ow);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * in[static_cast<std::size_t>(y) * W + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int H, int W,
                  const SsimOptions& o) {
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(H) * W) {
    throw ShapeError("ssim: plane shapes differ");
  }
  if (H < o.window || W < o.window) {
    throw ShapeError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " is smaller than the " + std::to_string(o.window) + "x" +
                     std::to_string(o.window) + " window");
  }
  const auto k = gaussian_kernel(o.window, o.sigma);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, H, W, k), mu_b = filter_valid(b, H, W, k);
  const auto e_aa = filter_valid(aa, H, W, k), e_bb = filter_valid(bb, H, W, k),
             e_ab = filter_valid(ab, H, W, k);
  const double c1 = std::pow(o.k1 * o.dynamic_range, 2);
  const double c2 = std::pow(o.k2 * o.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const Image& a, const Image& b, const SsimOptions& opts) {
  if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
  const int H = a.height(), W = a.width();
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> pa(a.pixels()), pb(a.pixels());
    for (std::size_t p = 0; p < a.pixels(); ++p) {
      pa[p] = a.data()[p * 3 + c];
      pb[p] = b.data()[p * 3 + c];
    }
    sum += ssim_plane(pa, pb, H, W, opts);
  }
  return sum / 3.0;
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void EvalReport::compute_means() {
  double psum = 0.0, ssum = 0.0;
  std::size_t pn = 0, sn = 0;
  excluded_infinite = 0;
  for (const auto& r : rows) {
    if (r.failed) continue;
    if (std::isfinite(r.psnr_db)) {
      psum += r.psnr_db;
      ++pn;
    } else {
      ++excluded_infinite;
    }
    ssum += r.ssim;
    ++sn;
  }
  mean_psnr_db = pn ? psum / static_cast<double>(pn)
                    : (excluded_infinite ? std::numeric_limits<double>::infinity()
                                         : std::numeric_limits<double>::quiet_NaN());
  mean_ssim = sn ? ssum / static_cast<double>(sn) : std::numeric_limits<double>::quiet_NaN();
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "# method: " << method << '\n';
  os << "# config_hash: " << config_hash << '\n';
  os << "id,psnr_db,ssim,lpips\n";
  for (const auto& r : rows) {
    if (r.failed) {
      os << r.id << ",failed,failed,\n";
    } else {
      os << r.id << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ",\n";
    }
  }
  if (!rows.empty()) {
    const auto fmt = [](double v) { return std::isnan(v) ? std::string("nan") : format_metric(v); };
    os << "mean," << fmt(mean_psnr_db) << ',' << fmt(mean_ssim) << ",\n";
  }
  return os.str();
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << to_csv();
  if (!out) throw IoError("short write on report " + path.string());
}

EvalReport evaluate(const Manifest& manifest, const Enhancer& enhance, const std::string& method,
                    const std::string& config_hash) {
  EvalReport report;
  report.method = method;
  report.config_hash = config_hash;
  for (const auto& row : manifest.rows) {
    EvalRow r;
    r.id = row.id;
    try {
      Manifest single;
      single.rows = {row};
      const TrainingPair pair = load_training_pairs(single).front();
      const Image out = enhance(pair.low, pair.thermal);
      r.psnr_db = psnr(out, pair.reference);
      r.ssim = ssim(out, pair.reference);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      std::cerr << "warning: evaluation of '" << row.id << "' failed: " << e.what() << '\n';
    }
    report.rows.push_back(std::move(r));
  }
  report.compute_means();
  if (report.excluded_infinite > 0) {
    std::cerr << "warning: " << report.excluded_infinite
              << " row(s) with identical output and reference excluded from the PSNR mean\n";
  }
  return report;
}

}  // namespace rtx
