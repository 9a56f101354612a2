#include "rtx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rtx/training.hpp"

namespace rtx {

bool GradCheckReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max({w, r.max_rel_error, r.directional_rel_error});
  return w;
}

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-36s entries %-6zu max_rel_err %.3e (analytic % .6e numeric % .6e) "
                  "direction %.3e  %s\n",
                  r.name.c_str(), r.entries_checked, r.max_rel_error, r.worst_analytic,
                  r.worst_numeric, r.directional_rel_error, r.passed ? "ok" : "FAIL");
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "parameters %zu  worst %.3e  tolerance %.1e  %s\n", rows.size(),
                worst(), tolerance, passed() ? "PASS" : "FAIL");
  os << buf;
  return os.str();
}

GradCheckReport gradient_check(ParameterStore& store, const std::function<double()>& loss,
                               const std::function<void()>& analytic,
                               const GradCheckOptions& opts) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;
  store.zero_grad();
  analytic();
  std::vector<AlignedValues> grads;
  for (const auto& e : store.entries()) grads.push_back(e.grad);

  Rng rng(opts.seed);
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& e = store.entry(i);
    std::vector<std::size_t> idx(e.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.entries_per_parameter > 0 && idx.size() > opts.entries_per_parameter) {
      // Partial Fisher-Yates: first k positions become a uniform sample.
      for (std::size_t k = 0; k < opts.entries_per_parameter; ++k) {
        std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
      }
      idx.resize(opts.entries_per_parameter);
      std::sort(idx.begin(), idx.end());
    }

    GradCheckRow row;
    row.name = e.name;
    for (std::size_t j : idx) {
      const double orig = e.values[j];
      e.values[j] = orig + opts.step;
      const double up = loss();
      e.values[j] = orig - opts.step;
      const double down = loss();
      e.values[j] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = grads[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (!(rel <= row.max_rel_error)) {
        row.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        row.worst_analytic = a;
        row.worst_numeric = numeric;
      }
      row.max_abs_analytic = std::max(row.max_abs_analytic, std::abs(a));
      ++row.entries_checked;
    }
    if (opts.directional) {
      // Whole-tensor probe along a random unit direction d of +-1/sqrt(n) entries.
      std::vector<double> d(e.size());
      const double mag = 1.0 / std::sqrt(static_cast<double>(d.size()));
      double expected = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) {
        d[j] = rng.below(2) ? mag : -mag;
        expected += grads[i][j] * d[j];
      }
      const AlignedValues orig = e.values;
      for (std::size_t j = 0; j < d.size(); ++j) e.values[j] = orig[j] + opts.step * d[j];
      const double up = loss();
      for (std::size_t j = 0; j < d.size(); ++j) e.values[j] = orig[j] - opts.step * d[j];
      const double down = loss();
      e.values = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double denom = std::max({std::abs(expected), std::abs(numeric), opts.abs_floor});
      const double rel = std::abs(expected - numeric) / denom;
      row.directional_rel_error = std::isfinite(rel) ? rel : INFINITY;
    }
    row.passed = row.max_rel_error < opts.tolerance && row.directional_rel_error < opts.tolerance;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void randomize_parameters(ParameterStore& store, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& e = store.entry(i);
    const bool is_temperature = e.name.size() >= 12 &&
                                e.name.compare(e.name.size() - 12, 12, ".temperature") == 0;
    const double fan_in = e.shape.size() >= 2
                              ? static_cast<double>(e.size()) / static_cast<double>(e.shape[0])
                              : 1.0;
    for (double& v : e.values) {
      const double u = 2.0 * rng.uniform() - 1.0;
      if (is_temperature) {
        v = 1.0 + 0.5 * u;
      } else if (e.shape.size() >= 2) {
        v = u / std::sqrt(fan_in);
      } else {
        v = 0.1 * u;
      }
    }
  }
}

GradCheckReport gradient_check_model(const ModelConfig& cfg, const GradCheckOptions& opts) {
  RtxNet net(cfg);
  randomize_parameters(net.params(), opts.seed);
  if (opts.fault_block) net.inject_backward_fault(*opts.fault_block);

  const int H = opts.height, W = opts.width;
  const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
  Rng rng(mix64(opts.seed + 1));
  const auto random_matrix = [&](Eigen::Index rows) {
    Matrix m(rows, n);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform();
    return m;
  };

  // Calibrate the projection on several random frames so the fit is full rank.
  const int needed = cfg.fused_input_channels();
  Matrix samples(needed, 0);
  while (samples.cols() < needed + 1) {
    const Matrix f = net.fused_features(random_matrix(3), random_matrix(1), H, W);
    samples.conservativeResize(Eigen::NoChange, samples.cols() + f.cols());
    samples.rightCols(f.cols()) = f;
  }
  net.set_projection(pca_fit(samples, cfg.fused_channels));

  // Smooth scalar probe L = sum(w .* out); |.| kinks would corrupt the differences.
  const Matrix rgb = random_matrix(3), thermal = random_matrix(1);
  const Matrix w = (random_matrix(3).array() - 0.5).matrix() / static_cast<double>(n);
  const auto loss = [&] { return net.forward(rgb, thermal, H, W).cwiseProduct(w).sum(); };
  const auto analytic = [&] {
    RtxNet::State st;
    net.forward(rgb, thermal, H, W, &st);
    net.backward(st, w);
  };
  return gradient_check(net.params(), loss, analytic, opts);
}

}  // namespace rtx
