#include "rtx/model.hpp"

#include <algorithm>
#include <cmath>

namespace rtx {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::cross_attention: return "cross_attention";
    case FusionMode::self_only: return "self_only";
    case FusionMode::concat4: return "concat4";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "cross_attention") return FusionMode::cross_attention;
  if (s == "self_only") return FusionMode::self_only;
  if (s == "concat4") return FusionMode::concat4;
  throw ParameterError("unknown ablation mode '" + s +
                       "' (expected cross_attention, self_only or concat4)");
}

void ModelConfig::validate() const {
  if (base_channels < 1 || heads < 1 || attention_blocks_per_branch < 1 || fused_channels < 1 ||
      patch_train_size < 1 || ffn_expansion < 1 || head_hidden < 1) {
    throw ParameterError("model config counts must all be >= 1");
  }
  if (base_channels % heads != 0) {
    throw ParameterError("base_channels (" + std::to_string(base_channels) +
                         ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (fused_channels > 2 * base_channels) {
    throw ParameterError("fused_channels must not exceed 2 * base_channels");
  }
  if (fused_channels > fused_input_channels()) {
    throw ParameterError("fused_channels exceeds the " + std::to_string(fused_input_channels()) +
                         " channels available in mode " + to_string(mode));
  }
}

int ModelConfig::fused_input_channels() const {
  return mode == FusionMode::cross_attention ? 2 * base_channels : base_channels;
}

std::size_t num_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.base_channels;
  const int rgb_in = cfg.mode == FusionMode::concat4 ? 4 : 3;
  const std::size_t block =
      AttentionBlock::parameter_count(c, cfg.heads, cfg.ffn_expansion, c);
  std::size_t n = IlluminationEstimator::parameter_count(rgb_in, c, true);
  n += static_cast<std::size_t>(rgb_in) * c + c;
  n += cfg.attention_blocks_per_branch * block;
  if (cfg.mode == FusionMode::cross_attention) {
    n += IlluminationEstimator::parameter_count(1, c, false);
    n += 2 * static_cast<std::size_t>(c);
    n += cfg.attention_blocks_per_branch * block;
    n += AttentionBlock::parameter_count(c, cfg.heads, cfg.ffn_expansion, std::nullopt);
  }
  const std::size_t k = cfg.head_hidden;
  n += cfg.fused_channels * k + k + 3 * k + 3;
  return n;
}

Matrix to_channel_major(const Image& img) {
  Matrix m(3, static_cast<Eigen::Index>(img.pixels()));
  const auto d = img.data();
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) m(c, static_cast<Eigen::Index>(p)) = d[p * 3 + c];
  }
  return m;
}

Matrix to_channel_major(const ThermalImage& img) {
  Matrix m(1, static_cast<Eigen::Index>(img.pixels()));
  const auto d = img.data();
  for (std::size_t p = 0; p < img.pixels(); ++p) m(0, static_cast<Eigen::Index>(p)) = d[p];
  return m;
}

Image image_from_channel_major(const Matrix& m, int height, int width, bool clamp) {
  if (m.rows() != 3 || m.cols() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("image_from_channel_major: shape mismatch");
  }
  Image img(height, width);
  auto d = img.data();
  for (Eigen::Index p = 0; p < m.cols(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = m(c, p);
      d[static_cast<std::size_t>(p) * 3 + c] = clamp ? std::clamp(v, 0.0, 1.0) : v;
    }
  }
  return img;
}

RtxNet::RtxNet(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  const bool cross = cfg_.mode == FusionMode::cross_attention;
  const int rgb_in = cfg_.mode == FusionMode::concat4 ? 4 : 3;

  est_rgb_ = IlluminationEstimator::create(store_, "illum.rgb", rgb_in, c, true);
  if (cross) est_thermal_ = IlluminationEstimator::create(store_, "illum.thermal", 1, c, false);
  embed_rgb_ = Linear::create(store_, "embed.rgb", c, rgb_in);
  if (cross) embed_thermal_ = Linear::create(store_, "embed.thermal", c, 1);
  for (int i = 0; i < cfg_.attention_blocks_per_branch; ++i) {
    rgb_blocks_.push_back(AttentionBlock::create(store_, "self_attn.rgb." + std::to_string(i), c,
                                                 cfg_.heads, cfg_.ffn_expansion, c));
  }
  if (cross) {
    for (int i = 0; i < cfg_.attention_blocks_per_branch; ++i) {
      thermal_blocks_.push_back(AttentionBlock::create(store_,
                                                       "self_attn.thermal." + std::to_string(i), c,
                                                       cfg_.heads, cfg_.ffn_expansion, c));
    }
    cross_ = AttentionBlock::create(store_, "cross_attn", c, cfg_.heads, cfg_.ffn_expansion,
                                    std::nullopt);
  }
  head_fc1_ = Linear::create(store_, "head.fc1", cfg_.head_hidden, cfg_.fused_channels);
  head_fc2_ = Linear::create(store_, "head.fc2", 3, cfg_.head_hidden);
}

void RtxNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < store_.count(); ++i) {
    const ParameterEntry& e = store_.entry(i);
    const std::string& name = e.name;
    const auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".bias")) {
      store_.fill(i, 0.0);
    } else if (ends_with(".temperature")) {
      store_.fill(i, 1.0);
    } else if (e.shape.size() == 3) {
      store_.init_uniform(i, static_cast<double>(e.shape[1]) * e.shape[2], rng);
    } else {
      store_.init_uniform(i, static_cast<double>(e.shape.back()), rng);
    }
  }
  // softplus(b) + eps = 1.
  store_.fill(*est_rgb_.map_head->bias, std::log(std::expm1(1.0 - kIlluminationEpsilon)));
  store_.fill(head_fc2_.weight, 0.0);
  store_.fill(*head_fc2_.bias, 0.0);
  store_.zero_grad();
}

void RtxNet::set_projection(PcaProjection p) {
  if (p.input_channels() != cfg_.fused_input_channels() ||
      p.output_channels() != cfg_.fused_channels) {
    throw ShapeError("PCA projection is " + std::to_string(p.input_channels()) + " -> " +
                     std::to_string(p.output_channels()) + ", model needs " +
                     std::to_string(cfg_.fused_input_channels()) + " -> " +
                     std::to_string(cfg_.fused_channels));
  }
  pca_ = std::move(p);
}

void RtxNet::inject_backward_fault(const std::string& block_prefix) {
  bool found = false;
  for (auto* blocks : {&rgb_blocks_, &thermal_blocks_}) {
    for (auto& b : *blocks) {
      if (b.prefix() == block_prefix) {
        b.set_corrupt_backward(true);
        found = true;
      }
    }
  }
  if (cross_ && cross_->prefix() == block_prefix) {
    cross_->set_corrupt_backward(true);
    found = true;
  }
  if (!found) throw ParameterError("no attention block named " + block_prefix);
}

Matrix RtxNet::forward_impl(const Matrix& rgb, const Matrix& thermal, int height, int width,
                            State* st, bool stop_at_fused) const {
  const Eigen::Index n = static_cast<Eigen::Index>(height) * width;
  if (rgb.rows() != 3 || rgb.cols() != n) throw ShapeError("forward: RGB input must be 3 x H*W");
  if (thermal.rows() != 1 || thermal.cols() != n) {
    throw ShapeError("forward: thermal input must be spatially aligned with the RGB input");
  }
  const bool cross = cfg_.mode == FusionMode::cross_attention;
  const bool concat4 = cfg_.mode == FusionMode::concat4;

  Matrix est_in = rgb;
  if (concat4) {
    est_in.conservativeResize(4, Eigen::NoChange);
    est_in.row(3) = thermal.row(0);
  }
  IlluminationEstimator::Cache est_rgb_cache;
  IlluminationOutputs illum_rgb =
      est_rgb_.forward(store_, FeatureMap(height, width, est_in), st ? &est_rgb_cache : nullptr);
  Matrix map = force_unit_map_ ? Matrix::Ones(1, n) : illum_rgb.map.data;
  Matrix lit = light_up(rgb, map);

  Matrix rgb_input = lit;
  if (concat4) {
    rgb_input.conservativeResize(4, Eigen::NoChange);
    rgb_input.row(3) = thermal.row(0);
  }
  Matrix x_rgb = embed_rgb_.forward(store_, rgb_input);
  std::vector<AttentionBlock::Cache> rgb_caches(st ? rgb_blocks_.size() : 0);
  for (std::size_t i = 0; i < rgb_blocks_.size(); ++i) {
    x_rgb = rgb_blocks_[i].forward(store_, x_rgb, x_rgb, &illum_rgb.features.data,
                                   st ? &rgb_caches[i] : nullptr);
  }

  Matrix fused;
  IlluminationEstimator::Cache est_th_cache;
  std::vector<AttentionBlock::Cache> th_caches(st ? thermal_blocks_.size() : 0);
  AttentionBlock::Cache cross_cache;
  Matrix x_th, th_illum;
  if (cross) {
    IlluminationOutputs illum_th = est_thermal_->forward(
        store_, FeatureMap(height, width, thermal), st ? &est_th_cache : nullptr);
    th_illum = std::move(illum_th.features.data);
    x_th = embed_thermal_->forward(store_, thermal);
    for (std::size_t i = 0; i < thermal_blocks_.size(); ++i) {
      x_th = thermal_blocks_[i].forward(store_, x_th, x_th, &th_illum,
                                        st ? &th_caches[i] : nullptr);
    }
    const Matrix attended = cross_->forward(store_, x_rgb, x_th, nullptr,
                                            st ? &cross_cache : nullptr);
    fused.resize(2 * cfg_.base_channels, n);
    fused.topRows(cfg_.base_channels) = attended;
    fused.bottomRows(cfg_.base_channels) = x_th;
  } else {
    fused = x_rgb;
  }
  if (stop_at_fused) return fused;

  if (pca_.empty()) throw ShapeError("forward: PCA projection has not been fitted");
  Matrix reduced = pca_reduce(fused, pca_);
  Matrix hidden = head_fc1_.forward(store_, reduced);
  Matrix out = lit + head_fc2_.forward(store_, gelu(hidden));

  if (st) {
    st->height = height;
    st->width = width;
    st->rgb = rgb;
    st->thermal = thermal;
    st->est_rgb = std::move(est_rgb_cache);
    st->est_thermal = std::move(est_th_cache);
    st->map = std::move(map);
    st->lit = std::move(lit);
    st->rgb_input = std::move(rgb_input);
    st->rgb_blocks = std::move(rgb_caches);
    st->thermal_blocks = std::move(th_caches);
    st->rgb_illum = std::move(illum_rgb.features.data);
    st->thermal_illum = std::move(th_illum);
    st->x_rgb = std::move(x_rgb);
    st->x_thermal = std::move(x_th);
    st->cross = std::move(cross_cache);
    st->fused = std::move(fused);
    st->reduced = std::move(reduced);
    st->hidden = std::move(hidden);
  }
  return out;
}

Matrix RtxNet::fused_features(const Matrix& rgb, const Matrix& thermal, int height,
                              int width) const {
  return forward_impl(rgb, thermal, height, width, nullptr, true);
}

Matrix RtxNet::forward(const Matrix& rgb, const Matrix& thermal, int height, int width,
                       State* state) const {
  return forward_impl(rgb, thermal, height, width, state, false);
}

Image RtxNet::enhance(const Image& rgb, const ThermalImage& thermal) const {
  if (!rgb.same_shape(thermal)) {
    throw ShapeError("enhance: RGB is " + std::to_string(rgb.height()) + "x" +
                     std::to_string(rgb.width()) + " but thermal is " +
                     std::to_string(thermal.height()) + "x" + std::to_string(thermal.width()));
  }
  const Matrix out =
      forward(to_channel_major(rgb), to_channel_major(thermal), rgb.height(), rgb.width());
  return image_from_channel_major(out, rgb.height(), rgb.width(), true);
}

IlluminationOutputs RtxNet::illumination(const Matrix& rgb, const Matrix& thermal, int height,
                                         int width) const {
  Matrix est_in = rgb;
  if (cfg_.mode == FusionMode::concat4) {
    est_in.conservativeResize(4, Eigen::NoChange);
    est_in.row(3) = thermal.row(0);
  }
  return est_rgb_.forward(store_, FeatureMap(height, width, est_in));
}

void RtxNet::backward(const State& st, const Matrix& dout) {
  const int c = cfg_.base_channels;
  Matrix dlit = dout;

  const Matrix dhidden_act = head_fc2_.backward(store_, gelu(st.hidden), dout);
  const Matrix dreduced = head_fc1_.backward(store_, st.reduced, gelu_backward(st.hidden, dhidden_act));
  const Matrix dfused = pca_reduce_backward(dreduced, pca_);

  Matrix dx_rgb;
  if (cross_) {
    AttentionBlock::Grads cg = cross_->backward(store_, st.cross, dfused.topRows(c));
    dx_rgb = std::move(cg.dx_q);
    Matrix dx_th = dfused.bottomRows(c) + cg.dx_kv;
    Matrix dth_illum = Matrix::Zero(c, dx_th.cols());
    for (std::size_t i = thermal_blocks_.size(); i-- > 0;) {
      AttentionBlock::Grads g = thermal_blocks_[i].backward(store_, st.thermal_blocks[i], dx_th);
      dx_th = g.dx_q + g.dx_kv;
      dth_illum += g.dillum;
    }
    embed_thermal_->backward_params(store_, st.thermal, dx_th);
    est_thermal_->backward(store_, st.est_thermal, dth_illum, Matrix());
  } else {
    dx_rgb = dfused;
  }

  Matrix drgb_illum = Matrix::Zero(c, dx_rgb.cols());
  for (std::size_t i = rgb_blocks_.size(); i-- > 0;) {
    AttentionBlock::Grads g = rgb_blocks_[i].backward(store_, st.rgb_blocks[i], dx_rgb);
    dx_rgb = g.dx_q + g.dx_kv;
    drgb_illum += g.dillum;
  }
  const Matrix drgb_input = embed_rgb_.backward(store_, st.rgb_input, dx_rgb);
  dlit += drgb_input.topRows(3);

  Matrix dmap;
  if (!force_unit_map_) dmap = (dlit.cwiseProduct(st.rgb)).colwise().sum();
  est_rgb_.backward(store_, st.est_rgb, drgb_illum, dmap);
}

}  // namespace rtx
