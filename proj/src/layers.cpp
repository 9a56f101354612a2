#include "rtx/layers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>
#include <numbers>

namespace rtx {

Linear Linear::create(ParameterStore& store, const std::string& prefix, int out, int in,
                      bool with_bias) {
  Linear l;
  l.weight = store.add(prefix + ".weight", {out, in});
  if (with_bias) l.bias = store.add(prefix + ".bias", {out});
  return l;
}

Matrix Linear::forward(const ParameterStore& store, const Matrix& x) const {
  const auto w = store.value_matrix(weight);
  if (w.cols() != x.rows()) {
    throw ShapeError(store.entry(weight).name + ": expects " + std::to_string(w.cols()) +
                     " input channels, got " + std::to_string(x.rows()));
  }
  Matrix y = w * x;
  if (bias) y.colwise() += store.value_vector(*bias);
  return y;
}

void Linear::backward_params(ParameterStore& store, const Matrix& x, const Matrix& dy) const {
  store.grad_matrix(weight).noalias() += dy * x.transpose();
  if (bias) store.grad_vector(*bias) += dy.rowwise().sum();
}

Matrix Linear::backward(ParameterStore& store, const Matrix& x, const Matrix& dy) const {
  backward_params(store, x, dy);
  return store.value_matrix(weight).transpose() * dy;
}

DepthwiseConv DepthwiseConv::create(ParameterStore& store, const std::string& prefix,
                                    int channels, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("depth-wise kernel must be odd");
  DepthwiseConv d;
  d.weight = store.add(prefix + ".weight", {channels, kernel, kernel});
  d.bias = store.add(prefix + ".bias", {channels});
  d.kernel = kernel;
  return d;
}

FeatureMap DepthwiseConv::forward(const ParameterStore& store, const FeatureMap& x) const {
  const auto& w = store.entry(weight).values;
  const auto& b = store.entry(bias).values;
  const int channels = x.channels();
  if (static_cast<std::size_t>(channels) != b.size()) {
    throw ShapeError(store.entry(weight).name + ": channel mismatch");
  }
  const int H = x.height, W = x.width, r = kernel / 2, kk = kernel * kernel;
  Matrix y(channels, x.pixels());
  std::vector<double> src(x.pixels()), dst(x.pixels());
  for (int c = 0; c < channels; ++c) {
    const double* k = w.data() + static_cast<std::size_t>(c) * kk;
    for (std::size_t p = 0; p < src.size(); ++p) src[p] = x.data(c, static_cast<Eigen::Index>(p));
    std::fill(dst.begin(), dst.end(), b[c]);
    for (int i = 0; i < kernel; ++i) {
      const int dy = i - r;
      const int h0 = std::max(0, -dy), h1 = std::min(H, H - dy);
      for (int j = 0; j < kernel; ++j) {
        const int dx = j - r;
        const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
        const double kv = k[i * kernel + j];
        for (int h = h0; h < h1; ++h) {
          double* out = dst.data() + static_cast<std::size_t>(h) * W;
          const double* in = src.data() + static_cast<std::size_t>(h + dy) * W + dx;
          for (int ww = w0; ww < w1; ++ww) out[ww] += kv * in[ww];
        }
      }
    }
    for (std::size_t p = 0; p < dst.size(); ++p) y(c, static_cast<Eigen::Index>(p)) = dst[p];
  }
  return FeatureMap(H, W, std::move(y));
}

FeatureMap DepthwiseConv::backward(ParameterStore& store, const FeatureMap& x,
                                   const Matrix& dy_all) const {
  const auto& w = store.entry(weight).values;
  auto& gw = store.entry(weight).grad;
  auto& gb = store.entry(bias).grad;
  const int channels = x.channels();
  const int H = x.height, W = x.width, r = kernel / 2, kk = kernel * kernel;
  Matrix dx_all(channels, x.pixels());
  std::vector<double> src(x.pixels()), g(x.pixels()), dsrc(x.pixels());
  for (int c = 0; c < channels; ++c) {
    const double* k = w.data() + static_cast<std::size_t>(c) * kk;
    double* gk = gw.data() + static_cast<std::size_t>(c) * kk;
    double bsum = 0.0;
    for (std::size_t p = 0; p < src.size(); ++p) {
      src[p] = x.data(c, static_cast<Eigen::Index>(p));
      g[p] = dy_all(c, static_cast<Eigen::Index>(p));
      bsum += g[p];
    }
    std::fill(dsrc.begin(), dsrc.end(), 0.0);
    for (int i = 0; i < kernel; ++i) {
      const int dy = i - r;
      const int h0 = std::max(0, -dy), h1 = std::min(H, H - dy);
      for (int j = 0; j < kernel; ++j) {
        const int dx = j - r;
        const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
        const double kv = k[i * kernel + j];
        double acc = 0.0;
        for (int h = h0; h < h1; ++h) {
          const double* go = g.data() + static_cast<std::size_t>(h) * W;
          const std::size_t off = static_cast<std::size_t>(h + dy) * W + dx;
          const double* in = src.data() + off;
          double* din = dsrc.data() + off;
          for (int ww = w0; ww < w1; ++ww) {
            acc += go[ww] * in[ww];
            din[ww] += kv * go[ww];
          }
        }
        gk[i * kernel + j] += acc;
      }
    }
    gb[c] += bsum;
    for (std::size_t p = 0; p < dsrc.size(); ++p) dx_all(c, static_cast<Eigen::Index>(p)) = dsrc[p];
  }
  return FeatureMap(H, W, std::move(dx_all));
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return gelu(v); });
}

Matrix gelu_cdf(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) { return gelu_backward(x, gelu_cdf(x), dy); }

Matrix gelu_backward(const Matrix& x, const Matrix& cdf, const Matrix& dy) {
  const double c = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  const auto pdf = (-0.5 * x.array().square()).exp() * c;
  return (dy.array() * (cdf.array() + x.array() * pdf)).matrix();
}

}  // namespace rtx
