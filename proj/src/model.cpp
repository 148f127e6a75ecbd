#include "posp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace posp::model {
namespace {

constexpr std::int64_t kConstantRaw = 0x2A;

// Sequential 64-bit words from HMAC(seed, counter).
class PrfStream {
 public:
  explicit PrfStream(const crypto::Seed& seed) : seed_(seed) {}

  std::uint64_t next() {
    if (word_ == 4) {
      block_ = crypto::prf(seed_, crypto::be64(counter_++));
      word_ = 0;
    }
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u = (u << 8) | block_.bytes[word_ * 8 + i];
    ++word_;
    return u;
  }

  // Uniform on the Q16.16 grid over [-1, 1): 17 high bits minus 2^16.
  Fixed next_unit() {
    return Fixed::from_raw(static_cast<std::int64_t>(next() >> 47) - Fixed::kOne);
  }

 private:
  crypto::Seed seed_;
  crypto::Digest block_{};
  std::uint64_t counter_ = 0;
  int word_ = 4;
};

}  // namespace

Fixed Fixed::from_double(double v) {
  const double scaled = std::floor(v * static_cast<double>(kOne));
  if (!(scaled >= -9.2233720368547758e18 && scaled < 9.2233720368547758e18)) {
    throw FixedOverflow("value outside the Q16.16 range");
  }
  return Fixed(static_cast<std::int64_t>(scaled));
}

Fixed fixed_mul(Fixed a, Fixed b) {
  const __int128 product = static_cast<__int128>(a.raw()) * b.raw();
  // Arithmetic shift on a signed 128-bit value floors toward -infinity.
  const __int128 shifted = product >> Fixed::kFractionBits;
  if (shifted > std::numeric_limits<std::int64_t>::max() ||
      shifted < std::numeric_limits<std::int64_t>::min()) {
    throw FixedOverflow("fixed_mul overflow");
  }
  return Fixed::from_raw(static_cast<std::int64_t>(shifted));
}

Fixed fixed_add(Fixed a, Fixed b) {
  std::int64_t out;
  if (__builtin_add_overflow(a.raw(), b.raw(), &out)) throw FixedOverflow("fixed_add overflow");
  return Fixed::from_raw(out);
}

Fixed fixed_sub(Fixed a, Fixed b) {
  std::int64_t out;
  if (__builtin_sub_overflow(a.raw(), b.raw(), &out)) throw FixedOverflow("fixed_sub overflow");
  return Fixed::from_raw(out);
}

ToyModel generate_model(const crypto::Seed& seed, std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw std::invalid_argument("model needs at least an input and an output dimension");
  if (std::find(dims.begin(), dims.end(), std::size_t{0}) != dims.end()) {
    throw std::invalid_argument("model dimensions must be >= 1");
  }
  ToyModel m;
  m.dims.assign(dims.begin(), dims.end());
  m.seed = seed;
  PrfStream stream(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.weights.rows = dims[l];
    layer.weights.cols = dims[l + 1];
    layer.weights.data.resize(dims[l] * dims[l + 1]);
    for (auto& w : layer.weights.data) w = stream.next_unit();
    layer.bias.resize(dims[l + 1]);
    for (auto& b : layer.bias) b = stream.next_unit();
    m.layers.push_back(std::move(layer));
  }
  return m;
}

Vector forward(const ToyModel& model, std::span<const Fixed> x) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " entries, model expects " + std::to_string(model.input_dim()));
  }
  Vector act(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    Vector out(layer.weights.cols);
    for (std::size_t j = 0; j < layer.weights.cols; ++j) {
      Fixed acc = layer.bias[j];
      for (std::size_t i = 0; i < layer.weights.rows; ++i) {
        acc = fixed_add(acc, fixed_mul(act[i], layer.weights(i, j)));
      }
      out[j] = acc;
    }
    if (l + 1 < model.layers.size()) {
      for (auto& v : out) v = std::max(v, Fixed{});
    }
    act = std::move(out);
  }
  return act;
}

Vector corrupt(std::span<const Fixed> y, CorruptMode mode) {
  Vector out(y.begin(), y.end());
  switch (mode) {
    case CorruptMode::flip_last_bit:
      for (auto& v : out) v = Fixed::from_raw(v.raw() ^ 1);
      break;
    case CorruptMode::constant: {
      const bool already = std::all_of(out.begin(), out.end(),
                                       [](Fixed v) { return v.raw() == kConstantRaw; });
      // An output that already equals the constant gets the next value instead.
      const std::int64_t c = already ? kConstantRaw + 1 : kConstantRaw;
      for (auto& v : out) v = Fixed::from_raw(c);
      break;
    }
    case CorruptMode::offset:
      for (auto& v : out) {
        const std::int64_t r = v.raw();
        v = Fixed::from_raw(r == std::numeric_limits<std::int64_t>::max() ? r - 1 : r + 1);
      }
      break;
  }
  return out;
}

crypto::Bytes encode(std::span<const Fixed> v) {
  crypto::Bytes out;
  out.reserve(v.size() * 8);
  for (Fixed f : v) {
    const auto u = static_cast<std::uint64_t>(f.raw());
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(u >> shift));
  }
  return out;
}

Vector decode(crypto::ByteView bytes) {
  if (bytes.size() % 8 != 0) throw std::invalid_argument("fixed vector encoding must be a multiple of 8 bytes");
  Vector out(bytes.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u = (u << 8) | bytes[k * 8 + i];
    out[k] = Fixed::from_raw(static_cast<std::int64_t>(u));
  }
  return out;
}

Vector random_vector(const crypto::Seed& seed, std::string_view label, std::size_t len) {
  PrfStream stream(crypto::derive_seed(seed, label));
  Vector v(len);
  for (auto& f : v) f = stream.next_unit();
  return v;
}

crypto::Bytes encode(const ToyModel& model) {
  crypto::Canonical c;
  for (std::size_t d : model.dims) c.field_u64(d);
  for (const Layer& layer : model.layers) {
    c.field(encode(layer.weights.data));
    c.field(encode(layer.bias));
  }
  return c.take();
}

}  // namespace posp::model
