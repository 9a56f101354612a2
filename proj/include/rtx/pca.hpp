#pragma once

#include "rtx/tensor.hpp"

namespace rtx {

/// Frozen linear channel reduction: out = basis * (x - mean).
struct PcaProjection {
  Vector mean;       // C_in
  Matrix basis;      // C_f x C_in, orthonormal rows, descending variance
  double explained_variance_fraction = 0.0;

  int input_channels() const { return static_cast<int>(mean.size()); }
  int output_channels() const { return static_cast<int>(basis.rows()); }
  bool empty() const { return basis.size() == 0; }

  friend bool operator==(const PcaProjection& a, const PcaProjection& b) {
    return a.mean == b.mean && a.basis == b.basis &&
           a.explained_variance_fraction == b.explained_variance_fraction;
  }
};

/// Fits the top `components` principal directions of the columns of
/// `samples` (C_in x n). Requires n >= C_in. Each basis row is sign-fixed so
/// its largest-magnitude entry is positive.
PcaProjection pca_fit(const Matrix& samples, int components);

/// Projects every column of `x` (C_in x N).
Matrix pca_reduce(const Matrix& x, const PcaProjection& proj);
FeatureMap pca_reduce(const FeatureMap& x, const PcaProjection& proj);

/// dL/dx for dL/d(out); the projection itself is constant.
Matrix pca_reduce_backward(const Matrix& dout, const PcaProjection& proj);

}  // namespace rtx
