#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/checkpoint.hpp"
#include "rtx/degradation.hpp"
#include "rtx/imageio.hpp"
#include "rtx/training.hpp"

using namespace rtx;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.base_channels = 8;
  c.heads = 2;
  c.fused_channels = 4;
  c.head_hidden = 8;
  return c;
}

TrainConfig quick(std::uint64_t iterations) {
  TrainConfig t;
  t.patch = 16;
  t.batch_size = 2;
  t.iterations = iterations;
  t.calibration_patches = 4;
  t.calibration_pixels_per_patch = 64;
  t.learning_rate = 1e-3;
  t.seed = 5;
  return t;
}

std::vector<TrainingPair> pairs(int n, int size) {
  std::vector<TrainingPair> out;
  for (int k = 0; k < n; ++k) {
    TrainingPair p;
    p.id = "p" + std::to_string(k);
    p.reference = test::pattern_image(size, k);
    p.thermal = test::pattern_thermal(size, k);
    DegradeParams d;
    d.exposure_factor = 4.0;
    d.seed = 1;
    d.image_index = static_cast<std::uint64_t>(k);
    p.low = degrade(p.reference, d);
    out.push_back(std::move(p));
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("mae loss and gradient") {
  Image a(2, 2, 0.5), b(2, 2, 0.25);
  CHECK(mae_loss(a, b) == 0.25);
  Matrix p(1, 3), g(1, 3);
  p << 0.5, 0.2, 0.9;
  g << 0.0, 0.2, 1.0;
  CHECK(mae_loss(p, g) == doctest::Approx(0.2));
  CHECK(mae_loss(p, g, {1.0, 1.0, 0.0}) == doctest::Approx(0.25));
  const Matrix grad = mae_loss_grad(p, g, {}, 3.0);
  CHECK(grad(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(grad(0, 1) == 0.0);
  CHECK(grad(0, 2) == doctest::Approx(-1.0 / 3.0));
  CHECK_THROWS_AS(mae_loss(Image(2, 2), Image(2, 3)), ShapeError);
  CHECK_THROWS_AS(mae_loss(p, g, {1.0}), ShapeError);
}

TEST_CASE("dihedral group") {
  const Image im = test::random_image(5, 5, 3);
  std::set<std::vector<double>> seen;
  for (int t = 0; t < kDihedralTransforms; ++t) {
    const Image x = apply_dihedral(im, t);
    seen.insert(x.values());
    // Values are permuted, never altered.
    std::vector<double> a = im.values(), b = x.values();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(seen.size() == 8);
  CHECK(apply_dihedral(apply_dihedral(im, 1), 3) == im);
  CHECK(apply_dihedral(apply_dihedral(im, 2), 2) == im);
  for (int t : {4, 5, 6, 7}) CHECK(apply_dihedral(apply_dihedral(im, t), t) == im);
  CHECK(apply_dihedral(apply_dihedral(apply_dihedral(im, 1), 1), 2) == im);
  // rot90 clockwise: the top-left pixel moves to the top-right.
  CHECK(apply_dihedral(im, 1).at(0, 4, 1) == im.at(0, 0, 1));
  CHECK(apply_dihedral(im, 4).at(2, 4, 0) == im.at(2, 0, 0));
  const Image wide = test::random_image(4, 6, 1);
  CHECK(apply_dihedral(wide, 2).height() == 4);
  CHECK_THROWS_AS(apply_dihedral(wide, 1), ShapeError);
}

TEST_CASE("patch sampling stays aligned and inside the frame") {
  auto data = pairs(1, 24);
  data[0].mask.assign(24 * 24, 1.0);
  data[0].mask[0] = 0.0;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const PatchTriple t = sample_patch(data[0], 16, rng);
    REQUIRE(t.offset_y + 16 <= 24);
    REQUIRE(t.offset_x + 16 <= 24);
    CHECK(t.low.at(3, 5, 2) == data[0].low.at(t.offset_y + 3, t.offset_x + 5, 2));
    CHECK(t.thermal.at(7, 1) == data[0].thermal.at(t.offset_y + 7, t.offset_x + 1));
    CHECK(t.mask[0] == ((t.offset_y == 0 && t.offset_x == 0) ? 0.0 : 1.0));
    const PatchTriple a = augment_with(t, 6);
    CHECK(a.reference.at(2, 9, 0) == t.reference.at(9, 2, 0));
  }
  CHECK_THROWS_AS(sample_patch(data[0], 25, rng), ShapeError);
}

TEST_CASE("step zero loss equals the lit-input loss") {
  Trainer tr(tiny(), quick(1), pairs(2, 20));
  tr.initialize();
  const auto batch = tr.next_batch();
  double expected_sum = 0.0, count = 0.0;
  for (const auto& t : batch) {
    const Matrix rgb = to_channel_major(t.low), th = to_channel_major(t.thermal);
    const IlluminationOutputs il = tr.network().illumination(rgb, th, 16, 16);
    expected_sum += mae_loss(light_up(rgb, il.map.data), to_channel_major(t.reference)) * 768.0;
    count += 768.0;
  }
  CHECK(std::abs(tr.step_on(batch) - expected_sum / count) < 1e-12);
}

TEST_CASE("masked pixels receive no gradient") {
  auto data = pairs(1, 16);
  data[0].mask.assign(256, 0.0);
  data[0].mask[17] = 1.0;
  TrainConfig tc = quick(1);
  tc.batch_size = 1;
  Trainer tr(tiny(), tc, data);
  tr.initialize();
  auto batch = tr.next_batch();
  const double loss = tr.step_on(batch);
  const auto& t = batch[0];
  std::size_t valid = 0;
  for (double m : t.mask) valid += m > 0.0;
  CHECK(valid == 1);
  CHECK(std::isfinite(loss));
}

TEST_CASE("loss decreases on a small fixture") {
  TrainConfig tc = quick(60);
  Trainer tr(tiny(), tc, pairs(2, 16));
  tr.initialize();
  const double before = tr.evaluate_mae();
  for (int i = 0; i < 60; ++i) tr.step();
  CHECK(tr.evaluate_mae() < 0.8 * before);
  CHECK(tr.iteration() == 60);
}

TEST_CASE("train writes byte-identical artefacts for identical runs") {
  test::TempDir a("train_a"), b("train_b");
  const auto out_a = train(pairs(2, 16), tiny(), quick(7), a.path());
  const auto out_b = train(pairs(2, 16), tiny(), quick(7), b.path());
  CHECK(slurp(out_a.checkpoint) == slurp(out_b.checkpoint));
  const std::string log = slurp(out_a.metrics_log);
  CHECK(log == slurp(out_b.metrics_log));
  CHECK(std::count(log.begin(), log.end(), '\n') == 7);
  CHECK(log.rfind("step 0 loss ", 0) == 0);
  const Checkpoint ck = load_checkpoint(out_a.checkpoint);
  CHECK(ck.iteration == 7);
  CHECK(ck.adam.t == 7);

  TrainConfig other = quick(7);
  other.seed = 6;
  test::TempDir c("train_c");
  CHECK(slurp(train(pairs(2, 16), tiny(), other, c.path()).checkpoint) != slurp(out_a.checkpoint));
}

TEST_CASE("zero iterations still writes the initial checkpoint") {
  test::TempDir dir("train0");
  const auto out = train(pairs(1, 16), tiny(), quick(0), dir.path());
  CHECK(std::filesystem::exists(out.checkpoint));
  CHECK(load_checkpoint(out.checkpoint).iteration == 0);
  CHECK(slurp(out.metrics_log).empty());
}

TEST_CASE("non-finite data aborts training") {
  auto data = pairs(1, 16);
  for (double& v : data[0].low.data()) v = std::nan("");
  Trainer tr(tiny(), quick(1), data);
  CHECK_THROWS_AS(
      [&] {
        tr.initialize();
        tr.step();
      }(),
      TrainingAbort);
}

TEST_CASE("config validation") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t = TrainConfig{};
  t.learning_rate = 0.0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t = TrainConfig{};
  t.warmup_steps = 4;
  CHECK(t.lr_at(0) == doctest::Approx(0.5e-4));
  CHECK(t.lr_at(4) == t.learning_rate);
  CHECK_THROWS_AS(Trainer(tiny(), quick(1), pairs(1, 12)), ParameterError);
  CHECK_THROWS_AS(Trainer(tiny(), quick(1), {}), ParameterError);
}
