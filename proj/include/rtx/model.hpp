#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtx/attention.hpp"
#include "rtx/illumination.hpp"
#include "rtx/image.hpp"
#include "rtx/layers.hpp"
#include "rtx/parameters.hpp"
#include "rtx/pca.hpp"

namespace rtx {

/// Which fusion architecture is built. The two non-default modes are the
/// ablation variants: RGB-only self-attention, and thermal stacked as a
/// fourth input channel into a single branch.
enum class FusionMode { cross_attention, self_only, concat4 };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& s);

struct ModelConfig {
  int base_channels = 132;
  int heads = 4;
  int attention_blocks_per_branch = 1;
  int fused_channels = 16;
  int patch_train_size = 128;
  int ffn_expansion = 4;
  int head_hidden = 64;
  FusionMode mode = FusionMode::cross_attention;

  void validate() const;
  /// Channels entering the PCA reduction: 2C with cross-attention, C otherwise.
  int fused_input_channels() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form trainable-scalar count.
///
/// With C channels, h heads, e FFN expansion, b blocks per branch, C_f fused
/// channels, k hidden head units and n RGB-branch input channels (3, or 4 for
/// concat4):
///   estimator(n, map) = (n+1)C + C + 25C + C [+ C + 1 if map]
///   block(gate)      = 3C^2 [+ C^2 + C] + h + C^2 + C + eC^2 + eC + eC^2 + C
///   embed(n)         = nC + C
///   head             = C_f k + k + 3k + 3
/// cross_attention adds a thermal estimator without map, a thermal embedding
/// with n = 1, b gated thermal blocks and one ungated cross block.
std::size_t num_parameters(const ModelConfig& cfg);

/// H x W x 3 image to a 3 x (H*W) channel-major matrix, and back.
Matrix to_channel_major(const Image& img);
Matrix to_channel_major(const ThermalImage& img);
Image image_from_channel_major(const Matrix& m, int height, int width, bool clamp);

/// The RGB-thermal enhancement network with explicit backward pass.
class RtxNet {
 public:
  struct State;

  explicit RtxNet(ModelConfig cfg);

  /// Uniform U(+-1/sqrt(fan_in)) weights, zero biases, unit temperatures, a
  /// map-head bias giving M = 1, and a zero final head layer.
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  PcaProjection& projection() { return pca_; }
  const PcaProjection& projection() const { return pca_; }
  void set_projection(PcaProjection p);

  /// Replaces the predicted map with M = 1 (identity illumination).
  void set_force_unit_illumination(bool on) { force_unit_map_ = on; }

  /// Features entering the PCA reduction; used for calibration.
  Matrix fused_features(const Matrix& rgb, const Matrix& thermal, int height, int width) const;

  /// Unclamped output (3 x N). `state` receives what backward needs.
  Matrix forward(const Matrix& rgb, const Matrix& thermal, int height, int width,
                 State* state = nullptr) const;

  /// Inference: clamped enhanced image.
  Image enhance(const Image& rgb, const ThermalImage& thermal) const;

  /// Accumulates parameter gradients of L given dL/d(output).
  void backward(const State& state, const Matrix& dout);

  /// Estimator outputs for the RGB branch (M and F_illum).
  IlluminationOutputs illumination(const Matrix& rgb, const Matrix& thermal, int height,
                                   int width) const;

  /// Test hook: corrupt the backward pass of the attention block with this prefix.
  void inject_backward_fault(const std::string& block_prefix);

  const std::vector<AttentionBlock>& rgb_blocks() const { return rgb_blocks_; }
  const std::vector<AttentionBlock>& thermal_blocks() const { return thermal_blocks_; }
  const std::optional<AttentionBlock>& cross_block() const { return cross_; }

  struct State {
    int height = 0, width = 0;
    Matrix rgb, thermal;
    IlluminationEstimator::Cache est_rgb, est_thermal;
    Matrix map;        // 1 x N
    Matrix lit;        // 3 x N
    Matrix rgb_input;  // embedding input of the RGB branch
    std::vector<AttentionBlock::Cache> rgb_blocks, thermal_blocks;
    Matrix rgb_illum, thermal_illum;
    Matrix x_rgb, x_thermal;
    AttentionBlock::Cache cross;
    Matrix fused, reduced, hidden;
  };

 private:
  Matrix forward_impl(const Matrix& rgb, const Matrix& thermal, int height, int width,
                      State* st, bool stop_at_fused) const;

  ModelConfig cfg_;
  ParameterStore store_;
  PcaProjection pca_;
  bool force_unit_map_ = false;

  IlluminationEstimator est_rgb_;
  std::optional<IlluminationEstimator> est_thermal_;
  Linear embed_rgb_;
  std::optional<Linear> embed_thermal_;
  std::vector<AttentionBlock> rgb_blocks_, thermal_blocks_;
  std::optional<AttentionBlock> cross_;
  Linear head_fc1_, head_fc2_;
};

}  // namespace rtx
