#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "posp/crypto.hpp"

using namespace posp::crypto;

namespace {

Seed filled(std::uint8_t b) {
  Seed s;
  s.bytes.fill(b);
  return s;
}

}  // namespace

TEST_CASE("hmac matches RFC 4231 case 1") {
  const Bytes key(20, 0x0b);
  CHECK(to_hex(hmac_sha256(key, as_bytes("Hi There"))) ==
        "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
}

TEST_CASE("prf golden vectors") {
  // Frozen from Python's hmac module.
  CHECK(to_hex(prf(filled(0x0b), as_bytes("Hi There"))) ==
        "198a607eb44bfbc69903a0f1cf2bbdc5ba0aa3f3d9ae3c1c7a3b1696a0b68cf7");
  CHECK(bucket(filled(0x00), as_bytes("a"), 97) == 90);

  PublicKey pk;
  for (std::size_t i = 0; i < pk.bytes.size(); ++i) pk.bytes[i] = static_cast<std::uint8_t>(i);
  const Bytes x{1, 2, 3};
  CHECK(to_hex(derive_reqid(pk, x, be64(7))) ==
        "e658a7060333d9ec9f794904d842ae6a41a727a73c8bd4d685629a2cf10ba5f9");
}

TEST_CASE("prf is deterministic and sensitive to every bit") {
  const Seed s = filled(0x42);
  Bytes data{0xde, 0xad, 0xbe, 0xef};
  const Digest a = prf(s, data);
  CHECK(prf(s, data) == a);
  data[2] ^= 0x01;
  CHECK(prf(s, data) != a);
}

TEST_CASE("canonical encoding is length prefixed") {
  Canonical c;
  c.field(as_bytes("ab")).field(ByteView{});
  CHECK(c.bytes() == Bytes{0, 0, 0, 2, 'a', 'b', 0, 0, 0, 0});
  // Different splits of the same concatenation encode differently.
  CHECK(encode_fields({as_bytes("ab"), as_bytes("c")}) != encode_fields({as_bytes("a"), as_bytes("bc")}));
  CHECK(be64(0x0102) == Bytes{0, 0, 0, 0, 0, 0, 1, 2});
}

TEST_CASE("bucket edge cases") {
  const Seed s = filled(0x11);
  CHECK_THROWS_AS(bucket(s, as_bytes("x"), 0), std::invalid_argument);
  for (std::uint64_t k = 0; k < 50; ++k) {
    CHECK(bucket(s, be64(k), 1) == 0);
    CHECK(bucket(s, be64(k), 7) == bucket(s, be64(k), 7));
    CHECK(bucket(s, be64(k), 7) < 7);
  }
}

TEST_CASE("sampled edge cases and monotonicity") {
  const Seed s = filled(0x22);
  CHECK(sampling_threshold(0.0) == 0);
  CHECK(sampling_threshold(1.0) == (static_cast<unsigned __int128>(1) << 64));
  CHECK_THROWS_AS(sampling_threshold(1.5), std::invalid_argument);
  for (std::uint64_t k = 0; k < 200; ++k) {
    CHECK_FALSE(sampled(s, be64(k), 0.0));
    CHECK(sampled(s, be64(k), 1.0));
    // Acceptance regions nest: sampled at p implies sampled at any p' > p.
    if (sampled(s, be64(k), 0.3)) CHECK(sampled(s, be64(k), 0.31));
  }
}

TEST_CASE("bucket is uniform over ten cells") {
  const Seed s = filled(0x33);
  std::array<int, 10> counts{};
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) ++counts[bucket(s, be64(k), 10)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  CHECK(chi2 < 27.877);  // chi-square(9) critical value at 0.001
}

TEST_CASE("ed25519 round trip") {
  const KeyPair a = KeyPair::from_seed(filled(1));
  const KeyPair b = KeyPair::from_seed(filled(2));
  Bytes msg{1, 2, 3, 4};
  const Signature sig = a.sign(msg);
  CHECK(verify(a.public_key(), msg, sig));
  CHECK_FALSE(verify(b.public_key(), msg, sig));
  CHECK(KeyPair::from_seed(filled(1)).public_key() == a.public_key());
  msg[3] ^= 0x80;
  CHECK_FALSE(verify(a.public_key(), msg, sig));
}

TEST_CASE("verify cache memoizes without accepting forgeries") {
  const KeyPair a = KeyPair::from_seed(filled(3));
  const Bytes msg{9, 9};
  VerifyCache cache;
  const Signature sig = a.sign(msg, cache);
  CHECK(cache.verify(a.public_key(), msg, sig));
  CHECK(cache.hits() == 1);
  Signature forged = sig;
  forged.bytes[0] ^= 1;
  CHECK_FALSE(cache.verify(a.public_key(), msg, forged));
  CHECK_FALSE(cache.verify(a.public_key(), msg, forged));
  CHECK(cache.misses() == 1);
}

TEST_CASE("hex round trip and streaming hash") {
  const Bytes raw{0x00, 0xff, 0x10};
  CHECK(to_hex(raw) == "00ff10");
  CHECK(from_hex("00ff10") == raw);
  CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
  Sha256Stream st;
  st.update(as_bytes("ab")).update(as_bytes("c"));
  CHECK(st.digest() == sha256(as_bytes("abc")));
  CHECK(to_hex(sha256(as_bytes("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derived seeds separate labels and indices") {
  const Seed root = filled(0x44);
  CHECK(derive_seed(root, "a", 0) != derive_seed(root, "a", 1));
  CHECK(derive_seed(root, "a", 0) != derive_seed(root, "b", 0));
  CHECK(derive_seed(root, "a", 3) == derive_seed(root, "a", 3));
}
