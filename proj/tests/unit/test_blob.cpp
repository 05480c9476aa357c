// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <bit>
#include <filesystem>
#include <random>

#include "divad/errors.hpp"
#include "divad/tensor_blob.hpp"

using namespace divad;

namespace {

Tensor random_tensor(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank_d(0, 4), dim_d(0, 6);
  std::vector<std::size_t> shape(static_cast<std::size_t>(rank_d(rng)));
  for (auto& d : shape) d = static_cast<std::size_t>(dim_d(rng));
  Tensor t(shape);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (auto& v : t.values()) {
    float f;
    do f = std::bit_cast<float>(bits(rng));
    while (std::isnan(f));
    v = f;
  }
  return t;
}

}  // namespace

TEST_CASE("blob layout") {
  Tensor t({2, 3});
  for (std::size_t i = 0; i < 6; ++i) t[i] = static_cast<double>(i) - 2.5;
  const std::string b = encode_blob(t);
  REQUIRE(b.size() == 8 + 2 * 4 + 6 * 4);
  CHECK(b.substr(0, 4) == "DTEN");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 2);
  CHECK(b[7] == 0);
  CHECK(static_cast<unsigned char>(b[8]) == 2);
  CHECK(static_cast<unsigned char>(b[12]) == 3);
  const Tensor back = decode_blob(b);
  CHECK(back.shape() == t.shape());
  CHECK(std::ranges::equal(back.values(), t.values()));
}

TEST_CASE("blob roundtrip is bit-exact over random payloads") {
  std::mt19937_64 rng(2026);
  for (int k = 0; k < 1000; ++k) {
    const Tensor t = random_tensor(rng);
    const std::string b = encode_blob(t);
    const Tensor back = decode_blob(b);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i)
      REQUIRE(std::bit_cast<std::uint64_t>(back[i]) == std::bit_cast<std::uint64_t>(t[i]));
    REQUIRE(encode_blob(back) == b);
  }
}

TEST_CASE("malformed blobs are rejected") {
  const std::string good = encode_blob(Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(decode_blob(""), ProtocolError);
  CHECK_THROWS_AS(decode_blob("DTE"), ProtocolError);
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_blob(bad), doctest::Contains("magic"), ProtocolError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_WITH_AS(decode_blob(bad), doctest::Contains("version"), ProtocolError);
  bad = good;
  bad[5] = 1;
  CHECK_THROWS_WITH_AS(decode_blob(bad), doctest::Contains("dtype"), ProtocolError);
  bad = good;
  bad[7] = 1;
  CHECK_THROWS_AS(decode_blob(bad), ProtocolError);
  CHECK_THROWS_AS(decode_blob(good.substr(0, good.size() - 1)), ProtocolError);
  CHECK_THROWS_AS(decode_blob(good + "x"), ProtocolError);
  CHECK_THROWS_AS(decode_blob(good.substr(0, 10)), ProtocolError);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int k = 0; k < 500; ++k) {
    std::string junk = good;
    junk[static_cast<std::size_t>(k) % junk.size()] = static_cast<char>(byte(rng));
    try {
      (void)decode_blob(junk);
    } catch (const ProtocolError&) {
    }
  }
}

TEST_CASE("frames") {
  const std::string body = encode_blob(Tensor({3}, 0.5));
  const std::string f = encode_frame({{"t", 981}, {"prompt", nullptr}}, body);
  const Frame back = decode_frame(f);
  CHECK(back.header.at("t") == 981);
  CHECK(back.header.at("prompt").is_null());
  CHECK(back.body == body);
  CHECK_THROWS_AS(decode_frame("ab"), ProtocolError);
  std::string bad = f;
  bad[0] = static_cast<char>(0x7f);
  CHECK_THROWS_AS(decode_frame(bad), ProtocolError);
  CHECK_THROWS_AS(decode_frame(std::string("\x03\0\0\0abc", 7)), ProtocolError);
}

TEST_CASE("blob files") {
  const auto path = std::filesystem::temp_directory_path() / "divad_test_blob.dten";
  const Tensor t({4, 1}, -3.25);
  write_blob_file(path, t);
  CHECK(std::ranges::equal(read_blob_file(path).values(), t.values()));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_blob_file(path), DataError);
}
