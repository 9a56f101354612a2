#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/datasets.hpp"
#include "rtx/errors.hpp"
#include "rtx/imageio.hpp"

using namespace rtx;
namespace fs = std::filesystem;

TEST_CASE("manifest parsing") {
  const std::string text =
      "{\"format_version\": 1, \"split\": \"test\"}\n"
      "{\"id\": \"a\", \"rgb_low\": \"low/a.png\", \"thermal\": \"ir/a.png\", \"rgb_ref\": \"ref/a.png\"}\n"
      "\n"
      "{\"id\": \"b\", \"rgb_low\": \"/abs/b.png\", \"thermal\": \"ir/b.png\", \"rgb_ref\": \"ref/b.png\","
      " \"homography\": [1,0,2, 0,1,-1, 0,0,1], \"exposure_factor\": 7.5, \"tags\": {\"gain\": \"low\"}}\n";
  const Manifest m = parse_manifest(text, "/data/set");
  CHECK(m.split == "test");
  REQUIRE(m.rows.size() == 2);
  CHECK(m.rows[0].rgb_low == fs::path("/data/set/low/a.png"));
  CHECK_FALSE(m.rows[0].homography.has_value());
  CHECK(m.rows[1].rgb_low == fs::path("/abs/b.png"));
  CHECK((*m.rows[1].homography)[2] == 2.0);
  CHECK(*m.rows[1].exposure_factor == 7.5);
  CHECK(m.rows[1].tags.at("gain") == "low");

  CHECK(parse_manifest("{\"format_version\":1}\n", "/x").rows.empty());
}

TEST_CASE("manifest validation errors name the row") {
  const std::string header = "{\"format_version\": 1}\n";
  const auto fails_with = [&](const std::string& body, const std::string& needle) {
    try {
      parse_manifest(header + body, "/d");
    } catch (const ValidationError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  const std::string row = R"({"id": "x", "rgb_low": "a", "thermal": "b", "rgb_ref": "c"})";
  CHECK(fails_with(row + "\n" + row + "\n", "duplicate id"));
  CHECK(fails_with(R"({"id": "y", "rgb_low": "a", "thermal": "b"})" "\n", "'rgb_ref'"));
  CHECK(fails_with(R"({"id": "z", "rgb_low": "a", "thermal": "b", "rgb_ref": "c", "homography": [1,2,3,2,4,6,0,0,1]})" "\n",
                   "singular"));
  CHECK(fails_with(R"({"id": "w", "rgb_low": "a", "thermal": "b", "rgb_ref": "c", "homography": [1,0,0]})" "\n",
                   "9 numbers"));
  CHECK(fails_with("not json\n", "line 2"));
  CHECK_THROWS_AS(parse_manifest("", "/d"), ValidationError);
  CHECK_THROWS_AS(parse_manifest("{\"format_version\": 2}\n", "/d"), ValidationError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/m.jsonl"), IoError);
}

TEST_CASE("manifest write/read round trip") {
  test::TempDir dir("manifest");
  Manifest m;
  m.split = "train";
  ManifestRow a;
  a.id = "a";
  a.rgb_low = dir / "low/a.png";
  a.thermal = dir / "ir/a.png";
  a.rgb_ref = dir / "ref/a.png";
  a.exposure_factor = 12.25;
  ManifestRow b = a;
  b.id = "b";
  b.homography = Homography{1.01, 0.02, -3.5, -0.01, 0.99, 2.25, 1e-5, 0, 1};
  b.tags["gain"] = "high";
  m.rows = {a, b};
  write_manifest(dir / "m.jsonl", m);
  CHECK(load_manifest(dir / "m.jsonl") == m);
  std::ifstream in(dir / "m.jsonl");
  std::string first;
  std::getline(in, first);
  CHECK(first.find("format_version") != std::string::npos);
}

TEST_CASE("subset selection") {
  std::vector<int> items(100);
  std::iota(items.begin(), items.end(), 0);
  CHECK(select_subset(items, 1) == items);
  CHECK(select_subset(items, 50) == std::vector<int>{0, 50});
  std::vector<int> big(42500);
  CHECK(select_subset(big, 50).size() == 850);
  for (std::size_t n : {0, 1, 7, 49, 50, 51}) {
    for (std::size_t s : {1, 3, 50}) {
      CHECK(select_subset(std::vector<int>(n), s).size() == (n + s - 1) / s);
    }
  }
  CHECK_THROWS_AS(select_subset(items, 0), ParameterError);
}

TEST_CASE("homography algebra") {
  const Homography h{2, 0.5, 3, -0.25, 1.5, -1, 0.001, 0.002, 1};
  const Homography inv = invert(h);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += h[r * 3 + k] * inv[k * 3 + c];
      CHECK(acc == doctest::Approx(r == c ? 1.0 : 0.0));
    }
  }
  CHECK_THROWS_AS(invert({1, 2, 3, 2, 4, 6, 1, 1, 1}), ParameterError);
}

TEST_CASE("identity warp is exact on the grid") {
  const ThermalImage t = test::random_thermal(9, 12, 1);
  const WarpResult w = warp_homography(t, identity_homography(), 9, 12);
  CHECK(w.image == t);
  for (double m : w.mask.data()) CHECK(m == 1.0);
}

TEST_CASE("integer translation moves a single bright pixel") {
  ThermalImage t(10, 10, 0.0);
  t.at(4, 3) = 1.0;
  const WarpResult w = warp_homography(t, {1, 0, 1, 0, 1, 0, 0, 0, 1}, 10, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) CHECK(w.image.at(y, x) == ((y == 4 && x == 4) ? 1.0 : 0.0));
    CHECK(w.mask.at(y, 0) == 0.0);
    CHECK(w.mask.at(y, 1) == 1.0);
  }
}

TEST_CASE("scaling by two spreads a 2x2 block over about 4x4") {
  ThermalImage t(16, 16, 0.0);
  for (int y = 6; y < 8; ++y)
    for (int x = 6; x < 8; ++x) t.at(y, x) = 1.0;
  const WarpResult w = warp_homography(t, {2, 0, 0, 0, 2, 0, 0, 0, 1}, 32, 32);
  int support = 0, full = 0;
  for (double v : w.image.data()) {
    support += v > 0.0;
    full += v == 1.0;
  }
  CHECK(full == 9);        // 12..14 in both axes
  CHECK(support == 25);    // 11..15 in both axes
}

TEST_CASE("warp then inverse warp round trip on the interior") {
  ThermalImage t(40, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) t.at(y, x) = 0.5 + 0.3 * std::sin(0.15 * x) * std::cos(0.11 * y);
  const Homography h{1.05, 0.03, -1.2, -0.02, 0.97, 0.8, 2e-4, -1e-4, 1};
  const WarpResult fwd = warp_homography(t, h, 40, 40);
  const WarpResult back = warp_homography(fwd.image, invert(h), 40, 40);
  double worst = 0.0;
  for (int y = 6; y < 34; ++y)
    for (int x = 6; x < 34; ++x) worst = std::max(worst, std::abs(back.image.at(y, x) - t.at(y, x)));
  CHECK(worst <= 0.02);
}

TEST_CASE("warp files and mask") {
  test::TempDir dir("warp");
  const WarpResult w = warp_homography(test::random_thermal(8, 8, 2), {1, 0, 3, 0, 1, 0, 0, 0, 1}, 8, 8);
  save_warped(w, dir / "t.png");
  CHECK(mask_path_for(dir / "t.png") == dir / "t_mask.png");
  const ThermalImage mask = load_thermal(dir / "t_mask.png");
  CHECK(mask.at(0, 2) == 0.0);
  CHECK(mask.at(0, 3) == 1.0);
}

namespace {

void make_stack(const fs::path& scene, const std::string& gain, int exposures, bool thermal = true) {
  fs::create_directories(scene / ("gain_" + gain));
  for (int k = 0; k < exposures; ++k) {
    save_image(Image(8, 8, 0.1 * k), scene / ("gain_" + gain) / ("exp_" + std::to_string(k) + ".png"));
  }
  if (thermal) save_image(ThermalImage(8, 8, 0.5), scene / "thermal.png");
}

}  // namespace

TEST_CASE("exposure-stack pairing") {
  test::TempDir dir("stack");
  const fs::path s5 = dir / "scene_01", s10 = dir / "scene_02";
  make_stack(s5, "low", 5);
  make_stack(s10, "high", 10);
  const ManifestRow r = pair_exposure_stack(s5, "low", 0, 4);
  CHECK(r.id == "scene_01_low_e0_e4");
  CHECK(r.rgb_low.filename() == "exp_0.png");
  CHECK(r.rgb_ref.filename() == "exp_4.png");
  CHECK(r.thermal == s5 / "thermal.png");
  CHECK_THROWS_AS(pair_exposure_stack(s5, "low", 7, 4), RangeError);
  CHECK_THROWS_AS(pair_exposure_stack(s5, "low", 0, 5), RangeError);
  CHECK_NOTHROW(pair_exposure_stack(s10, "high", 9, 2));
  CHECK(count_exposures(s10, "high") == 10);
  CHECK_THROWS_AS(pair_exposure_stack(s5, "low", 2, 2), ParameterError);
  CHECK_THROWS_AS(pair_exposure_stack(s5, "high", 0, 1), ValidationError);

  const fs::path s3 = dir / "scene_03";
  make_stack(s3, "low", 3);
  CHECK_THROWS_AS(pair_exposure_stack(s3, "low", 0, 2), ValidationError);
  const fs::path nt = dir / "scene_04";
  make_stack(nt, "low", 5, false);
  CHECK_THROWS_AS(pair_exposure_stack(nt, "low", 0, 4), ValidationError);

  StackLayout custom;
  custom.gain_dir = "{gain}";
  custom.exposure_file = "ev{k}.png";
  const fs::path cs = dir / "custom";
  fs::create_directories(cs / "g1");
  for (int k = 0; k < 5; ++k) save_image(Image(8, 8, 0.2), cs / "g1" / ("ev" + std::to_string(k) + ".png"));
  save_image(ThermalImage(8, 8, 0.5), cs / "thermal.png");
  CHECK(pair_exposure_stack(cs, "g1", 1, 3, custom).rgb_ref.filename() == "ev3.png");
}
