#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "noisefuse/scenarios.hpp"
#include "noisefuse/tensor_io.hpp"
#include "oracles.hpp"

using namespace noisefuse;

namespace {

std::string bytes(std::initializer_list<int> values) {
  std::string s;
  for (int v : values) s.push_back(static_cast<char>(v));
  return s;
}

}  // namespace

TEST_CASE("scalar zero encodes to header plus four zero bytes") {
  const std::string enc = encode_tensor(Tensor32{});
  CHECK(enc == std::string("NBT1") + bytes({0, 0, 0, 0, 0, 0}));
}

TEST_CASE("rank-1 f32 file layout") {
  const Tensor32 t(Shape{2}, {1.0f, 2.0f});
  const std::string enc = encode_tensor(t);
  // magic 4 + dtype 1 + rank 1 + one u64 extent + two f32 values
  REQUIRE(enc.size() == 4 + 1 + 1 + 8 + 2 * 4);
  CHECK(enc.size() == 22);
  CHECK(enc.substr(4, 2) == bytes({0, 1}));
  CHECK(enc.substr(6, 8) == bytes({2, 0, 0, 0, 0, 0, 0, 0}));
  // 1.0f = 0x3f800000, 2.0f = 0x40000000, little-endian
  CHECK(enc.substr(14) == bytes({0, 0, 0x80, 0x3f, 0, 0, 0, 0x40}));
}

TEST_CASE("f64 extents and payload are little-endian") {
  const Tensor64 t(Shape{1, 1}, {-2.0});
  const std::string enc = encode_tensor(t);
  REQUIRE(enc.size() == 4 + 2 + 16 + 8);
  CHECK(enc[4] == 1);
  CHECK(enc[5] == 2);
  // -2.0 = 0xc000000000000000
  CHECK(enc.substr(22) == bytes({0, 0, 0, 0, 0, 0, 0, 0xc0}));
}

TEST_CASE("write then read is bitwise identity") {
  Rng rng(7);
  const Tensor32 a = random_normal(Shape{3, 4, 5}, rng);
  CHECK(bitwise_equal(AnyTensor(a), decode_tensor(encode_tensor(a))));

  Tensor64 b(Shape{2, 3});
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::ldexp(1.0 + i, -1000 + 300 * int(i));
  b[0] = -0.0;
  const AnyTensor back = decode_tensor(encode_tensor(b));
  CHECK(bitwise_equal(AnyTensor(b), back));
  CHECK(std::signbit(std::get<Tensor64>(back)[0]));

  const Tensor32 empty(Shape{0, 3});
  CHECK(bitwise_equal(AnyTensor(empty), decode_tensor(encode_tensor(empty))));
}

TEST_CASE("encoding is deterministic") {
  Rng rng(3);
  const Tensor32 a = random_normal(Shape{2, 2}, rng);
  CHECK(encode_tensor(a) == encode_tensor(Tensor32(a)));
}

TEST_CASE("reader rejects malformed streams with distinct codes") {
  const std::string good = encode_tensor(Tensor32(Shape{2}, {1.0f, 2.0f}));

  CHECK(oracle::error_code([&] { decode_tensor("XXXX" + good.substr(4)); }) ==
        Errc::bad_magic);
  CHECK(oracle::error_code([&] { decode_tensor("NB"); }) == Errc::truncated);

  std::string dtype = good;
  dtype[4] = 7;
  CHECK(oracle::error_code([&] { decode_tensor(dtype); }) == Errc::unknown_dtype);

  for (std::size_t cut : {5u, 6u, 10u, 14u, 21u}) {
    CAPTURE(cut);
    CHECK(oracle::error_code([&] { decode_tensor(good.substr(0, cut)); }) == Errc::truncated);
  }

  std::string nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 14, &q, 4);
  CHECK(oracle::error_code([&] { decode_tensor(nan); }) == Errc::non_finite);

  std::string inf = good;
  const float i = std::numeric_limits<float>::infinity();
  std::memcpy(inf.data() + 18, &i, 4);
  CHECK(oracle::error_code([&] { decode_tensor(inf); }) == Errc::non_finite);
}

TEST_CASE("writer refuses non-finite tensors") {
  Tensor32 t(Shape{2});
  t[1] = std::numeric_limits<float>::infinity();
  std::ostringstream out;
  CHECK(oracle::error_code([&] { write_tensor(t, out); }) == Errc::non_finite);
}

TEST_CASE("huge declared extents are reported as truncation, not allocated") {
  std::string s = std::string("NBT1") + bytes({0, 1});
  s += bytes({0, 0, 0, 0, 0, 0, 0, 1});  // 2^56 elements
  CHECK(oracle::error_code([&] { decode_tensor(s); }) == Errc::truncated);

  std::string o = std::string("NBT1") + bytes({0, 2});
  o += bytes({0, 0, 0, 0, 0, 1, 0, 0});  // 2^40
  o += bytes({0, 0, 0, 0, 0, 1, 0, 0});
  CHECK(oracle::error_code([&] { decode_tensor(o); }) == Errc::out_of_range);
}

TEST_CASE("file helpers round-trip and name the path on failure") {
  const auto dir = oracle::scratch_dir("tensor_store");
  const Tensor64 t(Shape{2, 2}, {1, 2, 3, 4});
  save_tensor(dir / "m.nbt", t);
  CHECK(bitwise_equal(AnyTensor(t), load_tensor(dir / "m.nbt")));
  CHECK(load_tensor_as<float>(dir / "m.nbt")[3] == 4.0f);

  try {
    load_tensor(dir / "absent.nbt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
    CHECK(std::string(e.what()).find("absent.nbt") != std::string::npos);
  }
}

TEST_CASE("tensor construction checks payload size") {
  CHECK(oracle::error_code([] { Tensor32(Shape{2, 2}, {1, 2, 3}); }) == Errc::shape_mismatch);
  CHECK(Tensor32{}.size() == 1);
  CHECK(element_count(Shape{}) == 1);
  CHECK(element_count(Shape{3, 0, 2}) == 0);
}
