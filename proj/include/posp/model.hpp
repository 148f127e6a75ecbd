// Deterministic fixed-point feed-forward network standing in for the
// inference function. Every operation is exact integer arithmetic, so two
// evaluations agree byte for byte on any platform.
#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "posp/crypto.hpp"

namespace posp::model {

/// Signed Q16.16 value held in 64 bits.
class Fixed {
 public:
  static constexpr int kFractionBits = 16;
  static constexpr std::int64_t kOne = std::int64_t{1} << kFractionBits;

  constexpr Fixed() = default;
  static constexpr Fixed from_raw(std::int64_t raw) { return Fixed(raw); }
  static Fixed from_double(double v);

  constexpr std::int64_t raw() const { return raw_; }
  double to_double() const { return static_cast<double>(raw_) / static_cast<double>(kOne); }

  friend constexpr auto operator<=>(Fixed, Fixed) = default;

 private:
  constexpr explicit Fixed(std::int64_t raw) : raw_(raw) {}
  std::int64_t raw_ = 0;
};

struct FixedOverflow : std::overflow_error {
  using std::overflow_error::overflow_error;
};

/// (a*b) >> 16 on the 128-bit product, rounding toward negative infinity.
/// Throws FixedOverflow when the result leaves the 64-bit range.
Fixed fixed_mul(Fixed a, Fixed b);
Fixed fixed_add(Fixed a, Fixed b);
Fixed fixed_sub(Fixed a, Fixed b);

using Vector = std::vector<Fixed>;

/// Row-major (rows x cols) matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Fixed> data;

  Fixed& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Fixed operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Layer {
  Matrix weights;  // in x out
  Vector bias;     // out
};

struct ToyModel {
  std::vector<std::size_t> dims;
  std::vector<Layer> layers;
  crypto::Seed seed;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
};

/// Weights and biases drawn from the PRF stream of `seed`, uniform on the
/// Q16.16 grid over [-1, 1). Throws std::invalid_argument for fewer than two
/// dimensions or a zero dimension.
ToyModel generate_model(const crypto::Seed& seed, std::span<const std::size_t> dims);

/// Affine layers with ReLU between them (not after the last), accumulated
/// in input-index order. Throws std::invalid_argument on a dimension mismatch.
Vector forward(const ToyModel& model, std::span<const Fixed> x);

enum class CorruptMode { flip_last_bit, constant, offset };

/// Deterministic wrong-result generator; the result differs from a
/// non-empty input in at least one coordinate.
Vector corrupt(std::span<const Fixed> y, CorruptMode mode);

/// Concatenated 8-byte big-endian raw values, used as a canonical field.
crypto::Bytes encode(std::span<const Fixed> v);
Vector decode(crypto::ByteView bytes);

/// Input vector on the Q16.16 grid over [-1, 1) drawn from the PRF stream.
Vector random_vector(const crypto::Seed& seed, std::string_view label, std::size_t len);

/// Canonical byte encoding of the model (dims, then every weight and bias).
crypto::Bytes encode(const ToyModel& model);

}  // namespace posp::model
