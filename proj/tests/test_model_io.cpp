#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "reachsense/model_io.hpp"

using namespace reachsense;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), (std::streamsize)bytes.size());
}

}  // namespace

TEST_CASE("round trip is bit exact") {
  Network n = init_network(ArchDescriptor::parse("4-7-5-3"), 77);
  std::string p = tmp_path("rs_model_a.rsnm");
  json meta;
  meta["note"] = "hello";
  meta["custom_table"] = {1, 2, 3};
  save_model(n, p, meta);
  LoadedModel lm = load_model(p);
  CHECK(flatten_weights(lm.net) == flatten_weights(n));
  CHECK(lm.net.input_dim() == 4);
  CHECK(lm.metadata["note"] == "hello");
  CHECK(lm.metadata["custom_table"][2] == 3);

  // saving again produces identical bytes
  std::string p2 = tmp_path("rs_model_b.rsnm");
  save_model(n, p2, meta);
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("conv layers survive the round trip") {
  Network n = init_network(ArchDescriptor::parse("1x8x8-c3k3s1p1-c2k3s1p0-5"), 5);
  std::string p = tmp_path("rs_model_conv.rsnm");
  save_model(n, p);
  LoadedModel lm = load_model(p);
  CHECK(flatten_weights(lm.net) == flatten_weights(n));
  CHECK(lm.net.is_conv(0));
  CHECK(lm.net.is_conv(1));
  Mat X = Mat::Random(64, 3);
  CHECK((forward_batch(lm.net, X) - forward_batch(n, X)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corruption is detected") {
  Network n = init_network(ArchDescriptor::parse("3-4-2"), 3);
  std::string p = tmp_path("rs_model_c.rsnm");
  save_model(n, p);
  std::vector<char> good = slurp(p);

  auto bad = good;
  bad[0] = 'X';  // magic
  spit(p, bad);
  CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("magic"), std::runtime_error);

  bad = good;
  bad.resize(bad.size() - 5);  // truncated payload
  spit(p, bad);
  CHECK_THROWS(load_model(p));

  bad = good;
  bad[bad.size() - 1] ^= 0x40;  // flipped payload bit
  spit(p, bad);
  CHECK_THROWS_WITH_AS(load_model(p), doctest::Contains("checksum"), std::runtime_error);

  spit(p, {});  // empty file
  CHECK_THROWS(load_model(p));
  CHECK_THROWS(load_model(tmp_path("rs_model_missing.rsnm")));
}

TEST_CASE("crc32 reference values") {
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const unsigned char*>(s), 9) == 0xCBF43926u);
  CHECK(crc32(nullptr, 0) == 0u);
}
