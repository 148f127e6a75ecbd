// Deterministic primitives: PRF, bucket / Bernoulli sampling, request ids,
// canonical field encoding and Ed25519 signatures.
#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace posp::crypto {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Fixed-length byte string distinguished by a tag type.
template <typename Tag, std::size_t N>
struct Blob {
  static constexpr std::size_t kSize = N;
  std::array<std::uint8_t, N> bytes{};

  ByteView view() const { return bytes; }
  friend auto operator<=>(const Blob&, const Blob&) = default;
};

struct SeedTag {};
struct DigestTag {};
struct RequestIdTag {};
struct PublicKeyTag {};
struct SignatureTag {};

/// Block-cipher-sized key; beacon outputs and model seeds are Seeds.
using Seed = Blob<SeedTag, 32>;
using Digest = Blob<DigestTag, 32>;
using RequestId = Blob<RequestIdTag, 32>;
using PublicKey = Blob<PublicKeyTag, 32>;
using Signature = Blob<SignatureTag, 64>;

std::string to_hex(ByteView data);
template <typename Tag, std::size_t N>
std::string to_hex(const Blob<Tag, N>& blob) {
  return to_hex(blob.view());
}

/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

template <typename B>
B blob_from_hex(std::string_view hex) {
  Bytes raw = from_hex(hex);
  if (raw.size() != B::kSize) {
    throw std::invalid_argument("expected " + std::to_string(2 * B::kSize) + " hex characters");
  }
  B out;
  std::copy(raw.begin(), raw.end(), out.bytes.begin());
  return out;
}

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

Bytes be64(std::uint64_t v);

/// Message encoding used for every signature and hash in the system: each
/// field is written as a 4-byte big-endian length followed by its raw bytes.
class Canonical {
 public:
  Canonical& field(ByteView data);
  Canonical& field(std::string_view text) { return field(as_bytes(text)); }
  template <typename Tag, std::size_t N>
  Canonical& field(const Blob<Tag, N>& blob) {
    return field(blob.view());
  }
  Canonical& field_u64(std::uint64_t v);

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

Bytes encode_fields(std::initializer_list<ByteView> fields);

Digest sha256(ByteView data);

/// Incremental SHA-256.
class Sha256Stream {
 public:
  Sha256Stream();
  Sha256Stream& update(ByteView data);
  /// Digest of everything fed so far; the stream stays usable.
  Digest digest() const;

 private:
  alignas(16) std::array<std::uint8_t, 128> state_{};
};
Digest hmac_sha256(ByteView key, ByteView data);

/// HMAC-SHA-256 keyed by the seed.
Digest prf(const Seed& seed, ByteView data);

/// First eight PRF output bytes, big-endian.
std::uint64_t prf_u64(const Seed& seed, ByteView data);

/// PRF(seed, s) mod n. Throws std::invalid_argument for n == 0.
std::uint64_t bucket(const Seed& seed, ByteView unique_string, std::uint64_t n);

/// round(p * 2^64) as a 128-bit integer; p must lie in [0, 1].
unsigned __int128 sampling_threshold(double p);

/// True iff prf_u64(seed, s) < round(p * 2^64).
bool sampled(const Seed& seed, ByteView unique_string, double p);

/// SHA-256 over the canonical encoding of (pk_user, x, user_nonce).
RequestId derive_reqid(const PublicKey& pk_user, ByteView x, ByteView user_nonce);

Seed derive_seed(const Seed& parent, std::string_view label, std::uint64_t index = 0);

class VerifyCache;

class KeyPair {
 public:
  /// Deterministic Ed25519 key pair from a 32-byte seed.
  static KeyPair from_seed(const Seed& seed);

  const PublicKey& public_key() const { return pk_; }
  Signature sign(ByteView message) const;
  /// Signs and records the signature as valid in `cache`.
  Signature sign(ByteView message, VerifyCache& cache) const;

 private:
  PublicKey pk_;
  std::array<std::uint8_t, 64> sk_{};
};

bool verify(const PublicKey& pk, ByteView message, const Signature& sig);

/// Memoizes verify(); the result depends only on (pk, message, sig).
class VerifyCache {
 public:
  bool verify(const PublicKey& pk, ByteView message, const Signature& sig);
  /// Marks a signature produced with the matching secret key as valid.
  void remember(const PublicKey& pk, ByteView message, const Signature& sig);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept;
  };
  std::unordered_map<Digest, bool, DigestHash> memo_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace posp::crypto
