#include "doctest.h"
#include "dnp/common.hpp"

using namespace dnp;

TEST_CASE("bit addressing is MSB-first within bytes") {
  Bytes data = {0xAB, 0xCD};  // 1010 1011 1100 1101
  CHECK(read_bits_u64(data, 0, 8) == 0xAB);
  CHECK(read_bits_u64(data, 4, 8) == 0xBC);
  CHECK(read_bits_u64(data, 0, 16) == 0xABCD);
  CHECK(read_bits_u64(data, 0, 1) == 1);
  CHECK(read_bits_u64(data, 1, 1) == 0);
  // reads beyond the end are zero-extended
  CHECK(read_bits_u64(data, 8, 16) == 0xCD00);
}

TEST_CASE("write then read round-trips") {
  Bytes data(4, 0);
  write_bits_u64(data, 3, 13, 0x1234 & 0x1fff);
  CHECK(read_bits_u64(data, 3, 13) == (0x1234 & 0x1fff));
  CHECK(read_bits_u64(data, 0, 3) == 0);
  write_bits_u64(data, 0, 32, 0xdeadbeef);
  CHECK(read_bits_u64(data, 0, 32) == 0xdeadbeef);
}

TEST_CASE("copy_bits moves unaligned ranges") {
  Bytes src = {0xff, 0x00, 0xf0};
  Bytes dst(3, 0);
  copy_bits(dst, 4, src, 0, 12);
  CHECK(read_bits_u64(dst, 4, 12) == read_bits_u64(src, 0, 12));
  CHECK(read_bits_u64(dst, 0, 4) == 0);
}

TEST_CASE("extract_bits left-aligns") {
  Bytes data = {0x12, 0x34, 0x56};
  Bytes got = extract_bits(data, 4, 12);
  REQUIRE(got.size() == 2);
  CHECK(read_bits_u64(got, 0, 12) == 0x234);
  CHECK((got[1] & 0x0f) == 0);
}

TEST_CASE("ternary_match honors the mask") {
  Bytes key = {0xAB};
  CHECK(ternary_match(key, Bytes{0xAB}, Bytes{0xFF}));
  CHECK(ternary_match(key, Bytes{0x80}, Bytes{0x80}));
  CHECK(!ternary_match(key, Bytes{0x00}, Bytes{0x80}));
  CHECK(!ternary_match(key, Bytes{0xAB}, Bytes{0xFF, 0xFF}));  // width mismatch
}

TEST_CASE("hex round-trip") {
  Bytes b = {0x00, 0x9f, 0xff};
  Bytes back;
  CHECK(from_hex(to_hex(b), &back));
  CHECK(back == b);
  CHECK(!from_hex("zz", &back));
}

TEST_CASE("FieldRef parse/format") {
  FieldRef f;
  REQUIRE(FieldRef::parse("pkt[16:32]", &f));
  CHECK(f.space == FieldSpace::packet);
  CHECK(f.offset_bits == 16);
  CHECK(f.length_bits == 32);
  CHECK(f.to_string() == "pkt[16:32]");
  CHECK(FieldRef::parse("md[0:64]", &f));
  CHECK(FieldRef::parse("reg[64:64]", &f));
  CHECK(!FieldRef::parse("bogus[0:8]", &f));
  CHECK(!FieldRef::parse("md[0]", &f));
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}
