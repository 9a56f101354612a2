#pragma once

#include <optional>
#include <string>

#include "rtx/layers.hpp"
#include "rtx/parameters.hpp"
#include "rtx/tensor.hpp"

namespace rtx {

/// Added to softplus so the illumination map is strictly positive.
inline constexpr double kIlluminationEpsilon = 1e-4;
inline constexpr int kEstimatorKernel = 5;

struct IlluminationOutputs {
  FeatureMap features;  // F_illum, C channels
  FeatureMap map;       // M, one channel, > 0; empty when the estimator has no map head
};

/// Illumination estimator: the input is concatenated with its per-pixel
/// channel mean, then point-wise conv -> depth-wise 5x5 conv (the features)
/// -> point-wise conv -> softplus + eps (the map).
class IlluminationEstimator {
 public:
  struct Cache {
    FeatureMap input;  // input channels + mean prior
    FeatureMap embedded;
    Matrix features;
    Matrix map_logits;
  };

  static IlluminationEstimator create(ParameterStore& store, const std::string& prefix,
                                      int input_channels, int channels, bool with_map);
  static std::size_t parameter_count(int input_channels, int channels, bool with_map);

  /// `input` is channel-major with `input_channels` rows.
  IlluminationOutputs forward(const ParameterStore& store, const FeatureMap& input,
                              Cache* cache = nullptr) const;

  /// Parameter gradients from dL/dF_illum and dL/dM (either may be empty).
  void backward(ParameterStore& store, const Cache& cache, const Matrix& dfeatures,
                const Matrix& dmap) const;

  int input_channels() const { return input_channels_; }
  bool has_map() const { return map_head.has_value(); }

  Linear in_proj;
  DepthwiseConv depthwise;
  std::optional<Linear> map_head;

 private:
  int input_channels_ = 0;
};

/// out[c, p] = img[c, p] * M[p]; M broadcast over channels.
Matrix light_up(const Matrix& img, const Matrix& map);

}  // namespace rtx
