#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/layers.hpp"

using namespace rtx;

TEST_CASE("scalar activations") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    CHECK(gelu_grad(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
  }
  const Matrix x = test::random_matrix(3, 5, 2, -3, 3), dy = test::random_matrix(3, 5, 3);
  const Matrix a = gelu_backward(x, dy), b = gelu_backward(x, gelu_cdf(x), dy);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("linear layer forward and backward") {
  ParameterStore store;
  const Linear l = Linear::create(store, "l", 2, 3);
  store.entry(l.weight).values = {1, 2, 3, 4, 5, 6};
  store.entry(*l.bias).values = {0.5, -1};
  Matrix x(3, 2);
  x << 1, 0, 0, 1, 2, -1;
  const Matrix y = l.forward(store, x);
  CHECK(y(0, 0) == 7.5);
  CHECK(y(1, 1) == -2.0);
  Matrix dy = Matrix::Ones(2, 2);
  const Matrix dx = l.backward(store, x, dy);
  CHECK(dx(0, 0) == 5.0);
  CHECK(store.entry(*l.bias).grad[0] == 2.0);
  CHECK(store.entry(l.weight).grad[2] == 1.0);  // sum over pixels of x[2, :]
  CHECK_THROWS_AS(l.forward(store, Matrix::Zero(2, 2)), ShapeError);
}

TEST_CASE("depth-wise conv matches a direct loop") {
  ParameterStore store;
  const int C = 3, H = 6, W = 7, K = 5;
  const DepthwiseConv conv = DepthwiseConv::create(store, "dw", C, K);
  Rng rng(8);
  for (double& v : store.entry(conv.weight).values) v = rng.uniform() - 0.5;
  for (double& v : store.entry(conv.bias).values) v = rng.uniform();
  const FeatureMap x(H, W, test::random_matrix(C, H * W, 4));
  const FeatureMap y = conv.forward(store, x);
  const auto& w = store.entry(conv.weight).values;
  for (int c = 0; c < C; ++c) {
    for (int h = 0; h < H; ++h) {
      for (int ww = 0; ww < W; ++ww) {
        double acc = store.entry(conv.bias).values[c];
        for (int i = 0; i < K; ++i) {
          for (int j = 0; j < K; ++j) {
            const int hh = h + i - 2, wj = ww + j - 2;
            if (hh < 0 || hh >= H || wj < 0 || wj >= W) continue;
            acc += w[(c * K + i) * K + j] * x.data(c, hh * W + wj);
          }
        }
        CHECK(y.data(c, h * W + ww) == doctest::Approx(acc).epsilon(1e-13));
      }
    }
  }

  // Adjoint identity: <dy, conv(x) - b> = <conv^T(dy), x>.
  const Matrix dy = test::random_matrix(C, H * W, 5);
  store.zero_grad();
  const FeatureMap dx = conv.backward(store, x, dy);
  Matrix y0 = y.data;
  for (int c = 0; c < C; ++c) y0.row(c).array() -= store.entry(conv.bias).values[c];
  CHECK(dy.cwiseProduct(y0).sum() == doctest::Approx(dx.data.cwiseProduct(x.data).sum()));
  CHECK_THROWS_AS(DepthwiseConv::create(store, "even", 2, 4), ShapeError);
}
