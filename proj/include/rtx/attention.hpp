#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtx/layers.hpp"
#include "rtx/parameters.hpp"
#include "rtx/tensor.hpp"

namespace rtx {

/// softmax(scale * Q K^T) V with rows of Q/K/V as tokens.
///
/// `weights` is the row-stochastic matrix; every row is computed with max
/// subtraction so logits of any finite magnitude stay finite.
struct AttentionOutput {
  Matrix weights;  // n x n
  Matrix output;   // n x d_v
};

/// Scale defaults to 1 / sqrt(d_k).
AttentionOutput attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          std::optional<double> scale = std::nullopt);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

struct AttentionGrads {
  Matrix dq, dk, dv;
  double dscale = 0.0;
};

/// Backward of `attention` given the forward weights.
AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const Matrix& weights, double scale, const Matrix& dout);

/// Rows scaled to unit L2 norm (norm floored at 1e-12).
Matrix l2_normalize_rows(const Matrix& x, Vector* norms = nullptr);
Matrix l2_normalize_rows_backward(const Matrix& normalized, const Vector& norms,
                                  const Matrix& dnormalized);

/// Channel-wise multi-head attention block shared by the self- and
/// cross-attention stages.
///
/// Tokens are channels; each token's descriptor is its flattened spatial map.
/// Queries come from `x_q`, keys and values from `x_kv`. Q and K are
/// L2-normalised per token and scaled by a learnable per-head temperature.
/// When the block owns a gate, values are modulated as
/// V' = V * 2 sigmoid(W_g F_illum + b_g), so a zero gate is exactly 1.
/// The attended result goes through an output projection and residual,
/// followed by a residual GELU feed-forward block.
class AttentionBlock {
 public:
  struct Cache {
    Matrix x_q, x_kv, illum;
    Matrix q, k, v, gate, v_mod;
    std::vector<Matrix> q_hat, k_hat, weights;
    std::vector<Vector> q_norm, k_norm;
    Matrix attended, y1, hidden, cdf, act;
  };

  struct Grads {
    Matrix dx_q, dx_kv;
    Matrix dillum;  // empty when the block has no gate
  };

  AttentionBlock() = default;
  static AttentionBlock create(ParameterStore& store, const std::string& prefix, int channels,
                               int heads, int ffn_expansion, std::optional<int> illum_channels);

  /// Parameter count of one block; matches what `create` registers.
  static std::size_t parameter_count(int channels, int heads, int ffn_expansion,
                                     std::optional<int> illum_channels);

  Matrix forward(const ParameterStore& store, const Matrix& x_q, const Matrix& x_kv,
                 const Matrix* illum, Cache* cache = nullptr) const;
  Grads backward(ParameterStore& store, const Cache& cache, const Matrix& dout) const;

  bool has_gate() const { return gate_proj.has_value(); }
  int heads() const { return heads_; }
  int channels() const { return channels_; }
  const std::string& prefix() const { return prefix_; }

  /// Test hook: perturbs the softmax Jacobian in backward.
  void set_corrupt_backward(bool on) { corrupt_backward_ = on; }

  Linear q_proj, k_proj, v_proj, out_proj, ffn_in, ffn_out;
  std::optional<Linear> gate_proj;
  std::size_t temperature = 0;

 private:
  std::string prefix_;
  int channels_ = 0;
  int heads_ = 1;
  bool corrupt_backward_ = false;
};

}  // namespace rtx
