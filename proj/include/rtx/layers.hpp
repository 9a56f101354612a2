#pragma once

#include <cstddef>
#include <optional>

#include "rtx/parameters.hpp"
#include "rtx/tensor.hpp"

namespace rtx {

/// Point-wise (1x1) convolution on channel-major activations: y = W x + b.
struct Linear {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;

  static Linear create(ParameterStore& store, const std::string& prefix, int out, int in,
                       bool with_bias = true);

  Matrix forward(const ParameterStore& store, const Matrix& x) const;
  /// Accumulates dW, db and returns dL/dx.
  Matrix backward(ParameterStore& store, const Matrix& x, const Matrix& dy) const;
  /// Parameter gradients only, for inputs that need no gradient.
  void backward_params(ParameterStore& store, const Matrix& x, const Matrix& dy) const;
};

/// Depth-wise KxK convolution with zero "same" padding.
struct DepthwiseConv {
  std::size_t weight = 0;  // [C, K, K]
  std::size_t bias = 0;    // [C]
  int kernel = 5;

  static DepthwiseConv create(ParameterStore& store, const std::string& prefix, int channels,
                              int kernel);

  FeatureMap forward(const ParameterStore& store, const FeatureMap& x) const;
  FeatureMap backward(ParameterStore& store, const FeatureMap& x, const Matrix& dy) const;
};

double gelu(double x);
double gelu_grad(double x);
double softplus(double x);
double sigmoid(double x);

Matrix gelu(const Matrix& x);
/// Phi(x), the standard normal CDF; gelu(x) = x Phi(x).
Matrix gelu_cdf(const Matrix& x);
/// dy * gelu'(x), element-wise.
Matrix gelu_backward(const Matrix& x, const Matrix& dy);
Matrix gelu_backward(const Matrix& x, const Matrix& cdf, const Matrix& dy);

}  // namespace rtx
