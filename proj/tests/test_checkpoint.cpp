#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "rtx/checkpoint.hpp"
#include "rtx/errors.hpp"

using namespace rtx;

namespace {

Checkpoint sample_checkpoint() {
  ModelConfig c;
  c.base_channels = 8;
  c.heads = 2;
  c.fused_channels = 4;
  c.head_hidden = 5;
  RtxNet net(c);
  net.initialize(7);
  net.set_projection(pca_fit(test::random_matrix(16, 40, 2), 4));
  AdamState adam = AdamState::zeros_like(net.params());
  adam.t = 3;
  adam.m[0][1] = 0.25;
  adam.v[2][0] = 1e-9;
  return checkpoint_from_network(net, adam, 42);
}

}  // namespace

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  CHECK(fnv1a64(a, 1) == 0xaf63dc4c8601ec8cULL);
  const std::string foobar = "foobar";
  CHECK(fnv1a64(reinterpret_cast<const std::uint8_t*>(foobar.data()), foobar.size()) ==
        0x85944171f73967e8ULL);
}

TEST_CASE("serialise round trip") {
  const Checkpoint ck = sample_checkpoint();
  const auto bytes = serialize_checkpoint(ck);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RTXNETCK");
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back == ck);
  CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("file round trip and rebuilt network") {
  test::TempDir dir("ckpt");
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(dir / "a.rtx", ck);
  const Checkpoint back = load_checkpoint(dir / "a.rtx");
  CHECK(back == ck);
  const RtxNet net = network_from_checkpoint(back);
  const Image rgb = test::random_image(8, 8, 1);
  const ThermalImage th = test::random_thermal(8, 8, 2);
  CHECK(net.enhance(rgb, th) == network_from_checkpoint(ck).enhance(rgb, th));
  CHECK_FALSE(std::filesystem::exists(dir / "a.rtx.tmp"));
}

TEST_CASE("corruption is detected") {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint({}), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.rtx"), IoError);
}

TEST_CASE("mismatched tensors are rejected") {
  Checkpoint ck = sample_checkpoint();
  ck.params.entry(0).values.pop_back();
  ck.params.entry(0).grad.pop_back();
  ck.params.entry(0).shape = {static_cast<int>(ck.params.entry(0).values.size())};
  CHECK_THROWS(network_from_checkpoint(ck));
}
