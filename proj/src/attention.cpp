#include "rtx/attention.hpp"

#include <cmath>

namespace rtx {
namespace {
constexpr double kNormFloor = 1e-12;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

AttentionOutput attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          std::optional<double> scale) {
  if (q.cols() != k.cols()) throw ShapeError("attention: Q and K descriptor lengths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V token counts differ");
  if (q.cols() < 1) throw ShapeError("attention: d_k must be >= 1");
  const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(q.cols())));
  AttentionOutput r;
  r.weights = softmax_rows(s * (q * k.transpose()));
  r.output = r.weights * v;
  return r;
}

AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const Matrix& weights, double scale, const Matrix& dout) {
  AttentionGrads g;
  const Matrix dweights = dout * v.transpose();
  g.dv = weights.transpose() * dout;
  const Vector row_dot = (dweights.cwiseProduct(weights)).rowwise().sum();
  const Matrix dlogits = weights.cwiseProduct(dweights.colwise() - row_dot);
  g.dscale = dlogits.cwiseProduct(q * k.transpose()).sum();
  g.dq = scale * dlogits * k;
  g.dk = scale * dlogits.transpose() * q;
  return g;
}

Matrix l2_normalize_rows(const Matrix& x, Vector* norms) {
  Vector n = x.rowwise().norm().cwiseMax(kNormFloor);
  Matrix out = n.cwiseInverse().asDiagonal() * x;
  if (norms) *norms = std::move(n);
  return out;
}

Matrix l2_normalize_rows_backward(const Matrix& normalized, const Vector& norms,
                                  const Matrix& dnormalized) {
  Matrix dx(normalized.rows(), normalized.cols());
  for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
    if (norms(i) <= kNormFloor) {
      dx.row(i) = dnormalized.row(i) / kNormFloor;
      continue;
    }
    const double proj = normalized.row(i).dot(dnormalized.row(i));
    dx.row(i) = (dnormalized.row(i) - proj * normalized.row(i)) / norms(i);
  }
  return dx;
}

AttentionBlock AttentionBlock::create(ParameterStore& store, const std::string& prefix,
                                      int channels, int heads, int ffn_expansion,
                                      std::optional<int> illum_channels) {
  if (heads < 1 || channels % heads != 0) {
    throw ShapeError(prefix + ": channels must be divisible by heads");
  }
  AttentionBlock b;
  b.prefix_ = prefix;
  b.channels_ = channels;
  b.heads_ = heads;
  b.q_proj = Linear::create(store, prefix + ".q", channels, channels, false);
  b.k_proj = Linear::create(store, prefix + ".k", channels, channels, false);
  b.v_proj = Linear::create(store, prefix + ".v", channels, channels, false);
  if (illum_channels) b.gate_proj = Linear::create(store, prefix + ".gate", channels, *illum_channels);
  b.temperature = store.add(prefix + ".temperature", {heads});
  b.out_proj = Linear::create(store, prefix + ".out", channels, channels);
  b.ffn_in = Linear::create(store, prefix + ".ffn_in", ffn_expansion * channels, channels);
  b.ffn_out = Linear::create(store, prefix + ".ffn_out", channels, ffn_expansion * channels);
  return b;
}

std::size_t AttentionBlock::parameter_count(int channels, int heads, int ffn_expansion,
                                            std::optional<int> illum_channels) {
  const std::size_t c = channels, e = ffn_expansion;
  std::size_t n = 3 * c * c;                         // q, k, v
  if (illum_channels) n += c * *illum_channels + c;  // gate
  n += heads;                                        // temperature
  n += c * c + c;                                    // out
  n += e * c * c + e * c;                            // ffn_in
  n += e * c * c + c;                                // ffn_out
  return n;
}

Matrix AttentionBlock::forward(const ParameterStore& store, const Matrix& x_q, const Matrix& x_kv,
                               const Matrix* illum, Cache* cache) const {
  if (x_q.rows() != channels_ || x_kv.rows() != channels_) {
    throw ShapeError(prefix_ + ": expected " + std::to_string(channels_) + " channels");
  }
  if (x_q.cols() != x_kv.cols()) throw ShapeError(prefix_ + ": spatial size mismatch");
  if (gate_proj && (!illum || illum->cols() != x_q.cols())) {
    throw ShapeError(prefix_ + ": illumination features missing or mis-sized");
  }

  Matrix q = q_proj.forward(store, x_q);
  Matrix k = k_proj.forward(store, x_kv);
  Matrix v = v_proj.forward(store, x_kv);
  Matrix gate, v_mod;
  if (gate_proj) {
    gate = gate_proj->forward(store, *illum).unaryExpr([](double u) { return 2.0 * sigmoid(u); });
    v_mod = v.cwiseProduct(gate);
  } else {
    v_mod = v;
  }

  const int d = channels_ / heads_;
  const auto temp = store.value_vector(temperature);
  Matrix attended(channels_, x_q.cols());
  std::vector<Matrix> q_hat(heads_), k_hat(heads_), weights(heads_);
  std::vector<Vector> q_norm(heads_), k_norm(heads_);
  for (int h = 0; h < heads_; ++h) {
    q_hat[h] = l2_normalize_rows(q.middleRows(h * d, d), &q_norm[h]);
    k_hat[h] = l2_normalize_rows(k.middleRows(h * d, d), &k_norm[h]);
    AttentionOutput a = attention(q_hat[h], k_hat[h], v_mod.middleRows(h * d, d), temp(h));
    attended.middleRows(h * d, d) = a.output;
    weights[h] = std::move(a.weights);
  }

  Matrix y1 = x_q + out_proj.forward(store, attended);
  Matrix hidden = ffn_in.forward(store, y1);
  Matrix cdf = gelu_cdf(hidden);
  Matrix act = hidden.cwiseProduct(cdf);
  Matrix out = y1 + ffn_out.forward(store, act);

  if (cache) {
    cache->x_q = x_q;
    cache->x_kv = x_kv;
    cache->illum = illum ? *illum : Matrix();
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->gate = std::move(gate);
    cache->v_mod = std::move(v_mod);
    cache->q_hat = std::move(q_hat);
    cache->k_hat = std::move(k_hat);
    cache->q_norm = std::move(q_norm);
    cache->k_norm = std::move(k_norm);
    cache->weights = std::move(weights);
    cache->attended = std::move(attended);
    cache->y1 = std::move(y1);
    cache->hidden = std::move(hidden);
    cache->cdf = std::move(cdf);
    cache->act = std::move(act);
  }
  return out;
}

AttentionBlock::Grads AttentionBlock::backward(ParameterStore& store, const Cache& c,
                                               const Matrix& dout) const {
  // Feed-forward residual.
  const Matrix dact = ffn_out.backward(store, c.act, dout);
  const Matrix dhidden = gelu_backward(c.hidden, c.cdf, dact);
  Matrix dy1 = dout + ffn_in.backward(store, c.y1, dhidden);

  // Attention residual.
  Grads g;
  g.dx_q = dy1;
  const Matrix dattended = out_proj.backward(store, c.attended, dy1);

  const int d = channels_ / heads_;
  const auto temp = store.value_vector(temperature);
  auto dtemp = store.grad_vector(temperature);
  Matrix dq(channels_, c.q.cols()), dk(channels_, c.k.cols()), dv_mod(channels_, c.v.cols());
  for (int h = 0; h < heads_; ++h) {
    const Matrix dout_h = dattended.middleRows(h * d, d);
    AttentionGrads ag = attention_backward(c.q_hat[h], c.k_hat[h], c.v_mod.middleRows(h * d, d),
                                           c.weights[h], temp(h), dout_h);
    if (corrupt_backward_) {
      ag.dq *= 1.25;
      ag.dk *= 0.8;
    }
    dtemp(h) += ag.dscale;
    dq.middleRows(h * d, d) = l2_normalize_rows_backward(c.q_hat[h], c.q_norm[h], ag.dq);
    dk.middleRows(h * d, d) = l2_normalize_rows_backward(c.k_hat[h], c.k_norm[h], ag.dk);
    dv_mod.middleRows(h * d, d) = ag.dv;
  }

  Matrix dv;
  if (gate_proj) {
    dv = dv_mod.cwiseProduct(c.gate);
    // d(2 sigmoid(u))/du = G (1 - G / 2) with G = 2 sigmoid(u).
    const Matrix dgate_pre =
        dv_mod.cwiseProduct(c.v).cwiseProduct(c.gate.cwiseProduct((1.0 - 0.5 * c.gate.array()).matrix()));
    g.dillum = gate_proj->backward(store, c.illum, dgate_pre);
  } else {
    dv = dv_mod;
  }

  g.dx_q += q_proj.backward(store, c.x_q, dq);
  g.dx_kv = k_proj.backward(store, c.x_kv, dk);
  g.dx_kv += v_proj.backward(store, c.x_kv, dv);
  return g;
}

}  // namespace rtx
