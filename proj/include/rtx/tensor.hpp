#pragma once

#include <vector>

#include <Eigen/Dense>

#include "rtx/errors.hpp"

namespace rtx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<RowMatrix>;
using ConstWeightMap = Eigen::Map<const RowMatrix>;
/// Every buffer starts on the same boundary so vectorised reductions over
/// maps sum in the same order from run to run.
using AlignedValues = std::vector<double, Eigen::aligned_allocator<double>>;

/// Activation tensor stored channel-major: `data(c, h * width + w)`.
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix data;

  FeatureMap() = default;
  FeatureMap(int h, int w, Matrix m) : height(h), width(w), data(std::move(m)) {
    if (data.cols() != static_cast<Eigen::Index>(h) * w) {
      throw ShapeError("feature map column count does not match height*width");
    }
  }

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }
  bool same_grid(const FeatureMap& o) const { return height == o.height && width == o.width; }
  bool all_finite() const { return data.allFinite(); }
};

}  // namespace rtx
