#include "posp/crypto.hpp"

#include <sodium.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace posp::crypto {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) {
      throw std::runtime_error("libsodium initialisation failed");
    }
  });
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw std::invalid_argument("hex string has odd length");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw std::invalid_argument("invalid hex character");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Bytes be64(std::uint64_t v) {
  Bytes out(8);
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
  return out;
}

Canonical& Canonical::field(ByteView data) {
  if (data.size() > 0xFFFFFFFFu) {
    throw std::length_error("canonical field longer than 2^32-1 bytes");
  }
  auto len = static_cast<std::uint32_t>(data.size());
  buf_.push_back(static_cast<std::uint8_t>(len >> 24));
  buf_.push_back(static_cast<std::uint8_t>(len >> 16));
  buf_.push_back(static_cast<std::uint8_t>(len >> 8));
  buf_.push_back(static_cast<std::uint8_t>(len));
  buf_.insert(buf_.end(), data.begin(), data.end());
  return *this;
}

Canonical& Canonical::field_u64(std::uint64_t v) {
  Bytes b = be64(v);
  return field(b);
}

Bytes encode_fields(std::initializer_list<ByteView> fields) {
  Canonical c;
  for (ByteView f : fields) c.field(f);
  return c.take();
}

Digest sha256(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

Sha256Stream::Sha256Stream() {
  ensure_sodium();
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Sha256Stream& Sha256Stream::update(ByteView data) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()), data.data(),
                            data.size());
  return *this;
}

Digest Sha256Stream::digest() const {
  crypto_hash_sha256_state copy;
  std::memcpy(&copy, state_.data(), sizeof(copy));
  Digest d;
  crypto_hash_sha256_final(&copy, d.bytes.data());
  return d;
}

Digest hmac_sha256(ByteView key, ByteView data) {
  ensure_sodium();
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, data.data(), data.size());
  Digest d;
  crypto_auth_hmacsha256_final(&st, d.bytes.data());
  return d;
}

Digest prf(const Seed& seed, ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_auth_hmacsha256(d.bytes.data(), data.data(), data.size(), seed.bytes.data());
  return d;
}

std::uint64_t prf_u64(const Seed& seed, ByteView data) {
  Digest d = prf(seed, data);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u = (u << 8) | d.bytes[i];
  return u;
}

std::uint64_t bucket(const Seed& seed, ByteView unique_string, std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("bucket: N must be positive");
  }
  return prf_u64(seed, unique_string) % n;
}

unsigned __int128 sampling_threshold(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("sampling probability outside [0, 1]");
  }
  // p * 2^64 is exact in binary64; only the rounding to an integer remains.
  double scaled = std::round(std::ldexp(p, 64));
  if (scaled >= std::ldexp(1.0, 64)) {
    return static_cast<unsigned __int128>(1) << 64;
  }
  return static_cast<unsigned __int128>(static_cast<std::uint64_t>(scaled));
}

bool sampled(const Seed& seed, ByteView unique_string, double p) {
  unsigned __int128 threshold = sampling_threshold(p);
  return static_cast<unsigned __int128>(prf_u64(seed, unique_string)) < threshold;
}

RequestId derive_reqid(const PublicKey& pk_user, ByteView x, ByteView user_nonce) {
  Bytes msg = encode_fields({pk_user.view(), x, user_nonce});
  RequestId id;
  id.bytes = sha256(msg).bytes;
  return id;
}

Seed derive_seed(const Seed& parent, std::string_view label, std::uint64_t index) {
  Canonical c;
  c.field(label).field_u64(index);
  Seed s;
  s.bytes = prf(parent, c.bytes()).bytes;
  return s;
}

KeyPair KeyPair::from_seed(const Seed& seed) {
  ensure_sodium();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.pk_.bytes.data(), kp.sk_.data(), seed.bytes.data());
  return kp;
}

Signature KeyPair::sign(ByteView message) const {
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), sk_.data());
  return sig;
}

Signature KeyPair::sign(ByteView message, VerifyCache& cache) const {
  Signature sig = sign(message);
  cache.remember(pk_, message, sig);
  return sig;
}

bool verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                     pk.bytes.data()) == 0;
}

std::size_t VerifyCache::DigestHash::operator()(const Digest& d) const noexcept {
  std::size_t h;
  std::memcpy(&h, d.bytes.data(), sizeof h);
  return h;
}

namespace {

Digest memo_key(const PublicKey& pk, ByteView message, const Signature& sig) {
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  crypto_hash_sha256_update(&st, pk.bytes.data(), pk.bytes.size());
  crypto_hash_sha256_update(&st, sig.bytes.data(), sig.bytes.size());
  crypto_hash_sha256_update(&st, message.data(), message.size());
  Digest key;
  crypto_hash_sha256_final(&st, key.bytes.data());
  return key;
}

}  // namespace

void VerifyCache::remember(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  memo_.insert_or_assign(memo_key(pk, message, sig), true);
}

bool VerifyCache::verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  const Digest key = memo_key(pk, message, sig);
  if (auto it = memo_.find(key); it != memo_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  bool ok = crypto::verify(pk, message, sig);
  memo_.emplace(key, ok);
  return ok;
}

}  // namespace posp::crypto
