#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/attention.hpp"
#include "rtx/gradcheck.hpp"

using namespace rtx;

TEST_CASE("softmax rows sum to one and survive huge logits") {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(trial);
    const int n = 1 + static_cast<int>(rng.below(9)), d = 1 + static_cast<int>(rng.below(6));
    const double mag = std::pow(10.0, 4.0 * rng.uniform());
    const Matrix q = test::random_matrix(n, d, 3 * trial, -mag, mag);
    const Matrix k = test::random_matrix(n, d, 3 * trial + 1);
    const Matrix v = test::random_matrix(n, d, 3 * trial + 2);
    const AttentionOutput a = attention(q, k, v);
    REQUIRE(a.weights.allFinite());
    REQUIRE(a.output.allFinite());
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(a.weights.row(i).sum() - 1.0) < 1e-12);
    CHECK(a.weights.minCoeff() >= 0.0);
  }
}

TEST_CASE("hand-computed two-token attention") {
  Matrix q(1, 1), k(2, 1), v(2, 1);
  q << 1.0;
  k << 0.0, std::log(3.0);
  v << 10.0, 20.0;
  const AttentionOutput a = attention(q, k, v, 1.0);
  CHECK(a.weights(0, 0) == doctest::Approx(0.25));
  CHECK(a.output(0, 0) == doctest::Approx(17.5));
  CHECK_THROWS_AS(attention(q, Matrix(2, 2), v), ShapeError);
  CHECK_THROWS_AS(attention(q, k, Matrix(3, 1)), ShapeError);
}

TEST_CASE("attention backward against central differences") {
  const Matrix q = test::random_matrix(4, 3, 1), k = test::random_matrix(5, 3, 2),
               v = test::random_matrix(5, 2, 3), w = test::random_matrix(4, 2, 4);
  const double s = 0.7;
  const auto loss = [&](const Matrix& qq, const Matrix& kk, const Matrix& vv, double ss) {
    return attention(qq, kk, vv, ss).output.cwiseProduct(w).sum();
  };
  const AttentionOutput a = attention(q, k, v, s);
  const AttentionGrads g = attention_backward(q, k, v, a.weights, s, w);
  const double h = 1e-6;
  const auto check = [&](Matrix m, const Matrix& grad, int which) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      Matrix up = m, down = m;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fu = which == 0 ? loss(up, k, v, s) : which == 1 ? loss(q, up, v, s) : loss(q, k, up, s);
      const double fd = which == 0 ? loss(down, k, v, s) : which == 1 ? loss(q, down, v, s) : loss(q, k, down, s);
      CHECK(grad.data()[i] == doctest::Approx((fu - fd) / (2 * h)).epsilon(1e-6));
    }
  };
  check(q, g.dq, 0);
  check(k, g.dk, 1);
  check(v, g.dv, 2);
  CHECK(g.dscale == doctest::Approx((loss(q, k, v, s + h) - loss(q, k, v, s - h)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("row normalisation and its backward") {
  const Matrix x = test::random_matrix(3, 6, 9);
  Vector norms;
  const Matrix n = l2_normalize_rows(x, &norms);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(n.row(i).norm() == doctest::Approx(1.0));
  const Matrix w = test::random_matrix(3, 6, 10);
  const Matrix dx = l2_normalize_rows_backward(n, norms, w);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix up = x, down = x;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double num =
        (l2_normalize_rows(up).cwiseProduct(w).sum() - l2_normalize_rows(down).cwiseProduct(w).sum()) /
        (2 * h);
    CHECK(dx.data()[i] == doctest::Approx(num).epsilon(1e-6));
  }
  CHECK(l2_normalize_rows(Matrix::Zero(2, 3)).allFinite());
}

namespace {

GradCheckReport check_block(bool gated, bool cross, bool corrupt) {
  ParameterStore store;
  const int C = 8, N = 12;
  AttentionBlock b = AttentionBlock::create(store, "blk", C, 2, 2, gated ? std::optional<int>(5) : std::nullopt);
  b.set_corrupt_backward(corrupt);
  randomize_parameters(store, 3);
  const Matrix xq = test::random_matrix(C, N, 4);
  const Matrix xkv = cross ? test::random_matrix(C, N, 5) : xq;
  const Matrix illum = test::random_matrix(5, N, 6);
  const Matrix w = test::random_matrix(C, N, 7);
  const Matrix wi = test::random_matrix(C, N, 8);
  const auto loss = [&] {
    return b.forward(store, xq, xkv, gated ? &illum : nullptr).cwiseProduct(w).sum();
  };
  const auto analytic = [&] {
    AttentionBlock::Cache c;
    b.forward(store, xq, xkv, gated ? &illum : nullptr, &c);
    b.backward(store, c, w);
  };
  GradCheckOptions o;
  return gradient_check(store, loss, analytic, o);
}

}  // namespace

TEST_CASE("attention block parameter gradients") {
  CHECK(check_block(true, false, false).passed());
  CHECK(check_block(false, true, false).passed());
  const GradCheckReport bad = check_block(false, true, true);
  CHECK_FALSE(bad.passed());
  CHECK(bad.rows.size() == 10);
}

TEST_CASE("attention block input gradients") {
  ParameterStore store;
  const int C = 6, N = 10;
  AttentionBlock b = AttentionBlock::create(store, "blk", C, 3, 2, 4);
  randomize_parameters(store, 11);
  Matrix xq = test::random_matrix(C, N, 1), xkv = test::random_matrix(C, N, 2),
         illum = test::random_matrix(4, N, 3);
  const Matrix w = test::random_matrix(C, N, 4);
  AttentionBlock::Cache cache;
  b.forward(store, xq, xkv, &illum, &cache);
  const AttentionBlock::Grads g = b.backward(store, cache, w);
  const double h = 1e-6;
  const auto f = [&] { return b.forward(store, xq, xkv, &illum).cwiseProduct(w).sum(); };
  for (auto [m, grad] : {std::pair{&xq, &g.dx_q}, std::pair{&xkv, &g.dx_kv}, std::pair{&illum, &g.dillum}}) {
    for (Eigen::Index i = 0; i < m->size(); i += 3) {
      const double orig = m->data()[i];
      m->data()[i] = orig + h;
      const double up = f();
      m->data()[i] = orig - h;
      const double down = f();
      m->data()[i] = orig;
      CHECK(grad->data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero gate is exactly one and cross attention collapses to self attention") {
  ParameterStore store;
  const int C = 8, N = 16;
  AttentionBlock b = AttentionBlock::create(store, "blk", C, 2, 4, 5);
  randomize_parameters(store, 21);
  store.fill(b.gate_proj->weight, 0.0);
  store.fill(*b.gate_proj->bias, 0.0);
  const Matrix x = test::random_matrix(C, N, 1), illum = test::random_matrix(5, N, 2);
  AttentionBlock::Cache c;
  const Matrix gated = b.forward(store, x, x, &illum, &c);
  CHECK(c.gate == Matrix::Ones(C, N));

  ParameterStore plain_store;
  AttentionBlock plain = AttentionBlock::create(plain_store, "blk", C, 2, 4, std::nullopt);
  for (const char* name : {"q.weight", "k.weight", "v.weight", "temperature", "out.weight",
                           "out.bias", "ffn_in.weight", "ffn_in.bias", "ffn_out.weight",
                           "ffn_out.bias"}) {
    plain_store.entry(std::string("blk.") + name).values =
        store.entry(std::string("blk.") + name).values;
  }
  CHECK(plain.forward(plain_store, x, x, nullptr) == gated);
}

TEST_CASE("block shape errors") {
  ParameterStore store;
  CHECK_THROWS_AS(AttentionBlock::create(store, "bad", 10, 3, 4, std::nullopt), ShapeError);
  AttentionBlock b = AttentionBlock::create(store, "ok", 4, 2, 4, 3);
  CHECK_THROWS_AS(b.forward(store, Matrix::Zero(4, 5), Matrix::Zero(4, 5), nullptr), ShapeError);
  CHECK_THROWS_AS(b.forward(store, Matrix::Zero(3, 5), Matrix::Zero(3, 5), nullptr), ShapeError);
  CHECK(AttentionBlock::parameter_count(4, 2, 4, 3) == store.total_size());
}
