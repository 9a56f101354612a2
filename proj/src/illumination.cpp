#include "rtx/illumination.hpp"

namespace rtx {

IlluminationEstimator IlluminationEstimator::create(ParameterStore& store,
                                                    const std::string& prefix,
                                                    int input_channels, int channels,
                                                    bool with_map) {
  IlluminationEstimator e;
  e.input_channels_ = input_channels;
  e.in_proj = Linear::create(store, prefix + ".in_proj", channels, input_channels + 1);
  e.depthwise = DepthwiseConv::create(store, prefix + ".depthwise", channels, kEstimatorKernel);
  if (with_map) e.map_head = Linear::create(store, prefix + ".map_head", 1, channels);
  return e;
}

std::size_t IlluminationEstimator::parameter_count(int input_channels, int channels,
                                                   bool with_map) {
  const std::size_t c = channels;
  std::size_t n = (input_channels + 1) * c + c;
  n += kEstimatorKernel * kEstimatorKernel * c + c;
  if (with_map) n += c + 1;
  return n;
}

IlluminationOutputs IlluminationEstimator::forward(const ParameterStore& store,
                                                   const FeatureMap& input, Cache* cache) const {
  if (input.channels() != input_channels_) {
    throw ShapeError("illumination estimator expects " + std::to_string(input_channels_) +
                     " channels, got " + std::to_string(input.channels()));
  }
  Matrix with_prior(input_channels_ + 1, input.pixels());
  with_prior.topRows(input_channels_) = input.data;
  with_prior.row(input_channels_) = input.data.colwise().mean();
  FeatureMap prior_in(input.height, input.width, std::move(with_prior));

  FeatureMap embedded(input.height, input.width, in_proj.forward(store, prior_in.data));
  FeatureMap features = depthwise.forward(store, embedded);

  IlluminationOutputs out;
  Matrix logits;
  if (map_head) {
    logits = map_head->forward(store, features.data);
    Matrix m = logits.unaryExpr([](double u) { return softplus(u) + kIlluminationEpsilon; });
    out.map = FeatureMap(input.height, input.width, std::move(m));
  }
  out.features = features;
  if (cache) {
    cache->input = std::move(prior_in);
    cache->embedded = std::move(embedded);
    cache->features = std::move(features.data);
    cache->map_logits = std::move(logits);
  }
  return out;
}

void IlluminationEstimator::backward(ParameterStore& store, const Cache& cache,
                                     const Matrix& dfeatures, const Matrix& dmap) const {
  Matrix dfeat = dfeatures.size() ? dfeatures : Matrix::Zero(cache.features.rows(), cache.features.cols());
  if (map_head && dmap.size()) {
    const Matrix dlogits =
        dmap.cwiseProduct(cache.map_logits.unaryExpr([](double u) { return sigmoid(u); }));
    dfeat += map_head->backward(store, cache.features, dlogits);
  }
  const FeatureMap dembedded = depthwise.backward(store, cache.embedded, dfeat);
  in_proj.backward_params(store, cache.input.data, dembedded.data);
}

Matrix light_up(const Matrix& img, const Matrix& map) {
  if (map.rows() != 1 || map.cols() != img.cols()) {
    throw ShapeError("light_up: illumination map does not match image size");
  }
  return img * map.row(0).asDiagonal();
}

}  // namespace rtx
