#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/degradation.hpp"
#include "rtx/errors.hpp"

using namespace rtx;

TEST_CASE("identity configuration") {
  const Image im = test::random_image(17, 11, 3);
  DegradeParams p;
  p.exposure_factor = 1.0;
  p.shot_coeff = 0.0;
  p.read_coeff = 0.0;
  CHECK(degrade(im, p) == im);
}

TEST_CASE("pure division") {
  DegradeParams p;
  p.exposure_factor = 5.0;
  p.shot_coeff = p.read_coeff = 0.0;
  const Image out = degrade(Image(4, 4, 0.8), p);
  for (double v : out.data()) CHECK(v == doctest::Approx(0.16).epsilon(1e-15));
}

TEST_CASE("noise variance matches the affine model") {
  DegradeParams p;
  p.exposure_factor = 2.0;
  p.shot_coeff = 0.01;
  p.read_coeff = 1e-4;
  p.seed = 42;
  const Image out = degrade(Image(1000, 334, 0.8), p);  // 1,002,000 samples, mean 0.4, sd 0.064
  double sum = 0.0, sq = 0.0;
  for (double v : out.data()) {
    sum += v - 0.4;
    sq += (v - 0.4) * (v - 0.4);
  }
  const double n = static_cast<double>(out.size());
  const double expected = 0.01 * 0.4 + 1e-4;
  CHECK(std::abs(sq / n - expected) / expected < 0.01);
  // standard error of the mean is about 6.4e-5
  CHECK(std::abs(sum / n) < 3e-4);
}

TEST_CASE("clamping at zero shrinks the variance of dark pixels") {
  DegradeParams p;
  p.exposure_factor = 10.0;
  p.seed = 43;
  const Image out = degrade(Image(500, 200, 0.5), p);
  double sq = 0.0, lowest = 1.0;
  for (double v : out.data()) {
    lowest = std::min(lowest, v);
    sq += (v - 0.05) * (v - 0.05);
  }
  CHECK(lowest == 0.0);
  CHECK(sq / static_cast<double>(out.size()) < 0.01 * 0.05 + 1e-4);
}

TEST_CASE("determinism and seed sensitivity") {
  const Image im = test::random_image(16, 16, 9);
  DegradeParams p;
  p.exposure_factor = 7.0;
  p.seed = 5;
  p.image_index = 2;
  CHECK(degrade(im, p) == degrade(im, p));
  DegradeParams q = p;
  q.seed = 6;
  CHECK_FALSE(degrade(im, p) == degrade(im, q));
  q = p;
  q.image_index = 3;
  CHECK_FALSE(degrade(im, p) == degrade(im, q));
}

TEST_CASE("monotone in the exposure factor without noise") {
  const Image im = test::random_image(8, 8, 1);
  DegradeParams a, b;
  a.shot_coeff = a.read_coeff = b.shot_coeff = b.read_coeff = 0.0;
  a.exposure_factor = 4.0;
  b.exposure_factor = 9.0;
  const Image lo = degrade(im, b), hi = degrade(im, a);
  for (std::size_t i = 0; i < im.size(); ++i) CHECK(lo.data()[i] <= hi.data()[i]);
}

TEST_CASE("output stays in range") {
  DegradeParams p;
  p.exposure_factor = 1.0;
  p.shot_coeff = 0.5;
  p.read_coeff = 0.1;
  const Image out = degrade(test::random_image(32, 32, 4), p);
  CHECK_NOTHROW(out.validate());
}

TEST_CASE("parameter validation") {
  DegradeParams p;
  p.exposure_factor = 0.5;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p.exposure_factor = 101.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p.exposure_factor = 2.0;
  p.shot_coeff = -1e-3;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p.shot_coeff = 0.0;
  p.read_coeff = -1e-9;
  CHECK_THROWS_AS(degrade(Image(2, 2), p), ParameterError);
}

TEST_CASE("exposure factor draws") {
  Rng rng(11);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double f = sample_exposure_factor(rng);
    REQUIRE(f >= 5.0);
    REQUIRE(f <= 20.0);
    sum += f;
  }
  CHECK(std::abs(sum / n - 12.5) / 12.5 < 0.01);
  Rng a(3), b(3);
  CHECK(sample_exposure_factor(a) == sample_exposure_factor(b));
  CHECK_THROWS_AS(sample_exposure_factor(rng, 5.0, 5.0), ParameterError);
  CHECK_THROWS_AS(sample_exposure_factor(rng, 6.0, 5.0), ParameterError);
}
