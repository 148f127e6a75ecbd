#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "posp/model.hpp"

using namespace posp;
using model::Fixed;

namespace {

crypto::Seed seed_of(std::uint8_t b) {
  crypto::Seed s;
  s.bytes.fill(b);
  return s;
}

Fixed raw(std::int64_t v) { return Fixed::from_raw(v); }

// Straight double-free reimplementation of one forward pass.
model::Vector reference_forward(const model::ToyModel& m, const model::Vector& x) {
  std::vector<std::int64_t> cur;
  for (Fixed v : x) cur.push_back(v.raw());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    std::vector<std::int64_t> next(layer.weights.cols);
    for (std::size_t o = 0; o < layer.weights.cols; ++o) {
      __int128 acc = layer.bias[o].raw();
      for (std::size_t i = 0; i < layer.weights.rows; ++i) {
        const __int128 prod = static_cast<__int128>(cur[i]) * layer.weights(i, o).raw();
        acc += prod >> 16;  // arithmetic shift floors
      }
      next[o] = static_cast<std::int64_t>(acc);
      if (l + 1 < m.layers.size() && next[o] < 0) next[o] = 0;
    }
    cur = next;
  }
  model::Vector out;
  for (auto v : cur) out.push_back(raw(v));
  return out;
}

}  // namespace

TEST_CASE("fixed multiplication") {
  CHECK(model::fixed_mul(raw(98304), raw(131072)).raw() == 196608);
  CHECK(model::fixed_mul(raw(6554), raw(6554)).raw() == 655);
  CHECK(model::fixed_mul(raw(123456), raw(0)).raw() == 0);
  // Floors towards negative infinity: -1 raw times 0.5 is -0.5 raw, floored to -1.
  CHECK(model::fixed_mul(raw(-1), raw(32768)).raw() == -1);
  const auto big = raw(std::numeric_limits<std::int64_t>::max());
  CHECK_THROWS_AS(model::fixed_mul(big, big), model::FixedOverflow);
  CHECK_THROWS_AS(model::fixed_add(big, raw(1)), model::FixedOverflow);
  CHECK_THROWS_AS(model::fixed_sub(raw(std::numeric_limits<std::int64_t>::min()), raw(1)), model::FixedOverflow);
  CHECK(model::fixed_add(raw(5), raw(-7)).raw() == -2);
}

TEST_CASE("fixed multiplication truncation error is below one ulp") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> d(-(std::int64_t{1} << 30), std::int64_t{1} << 30);
  for (int k = 0; k < 20000; ++k) {
    const Fixed a = raw(d(rng)), b = raw(d(rng));
    // Exact remainder of the scaled product, in units of 2^-32.
    const __int128 rem = static_cast<__int128>(a.raw()) * b.raw() -
                         (static_cast<__int128>(model::fixed_mul(a, b).raw()) << 16);
    CHECK(rem >= 0);
    CHECK(rem < (__int128{1} << 16));
  }
}

TEST_CASE("model generation") {
  const std::vector<std::size_t> dims{4, 8, 2};
  const auto a = model::generate_model(seed_of(1), dims);
  const auto b = model::generate_model(seed_of(1), dims);
  const auto c = model::generate_model(seed_of(2), dims);
  CHECK(model::encode(a) == model::encode(b));
  CHECK(model::encode(a) != model::encode(c));
  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].weights.rows == 4);
  CHECK(a.layers[0].weights.cols == 8);
  CHECK(a.layers[0].bias.size() == 8);
  CHECK(a.layers[1].weights.rows == 8);
  CHECK(a.layers[1].weights.cols == 2);
  CHECK(a.layers[1].bias.size() == 2);
  for (const auto& layer : a.layers) {
    for (Fixed w : layer.weights.data) {
      CHECK(w.raw() >= -Fixed::kOne);
      CHECK(w.raw() < Fixed::kOne);
    }
  }
  CHECK_THROWS_AS(model::generate_model(seed_of(1), std::vector<std::size_t>{4}), std::invalid_argument);
  CHECK_THROWS_AS(model::generate_model(seed_of(1), std::vector<std::size_t>{4, 0}), std::invalid_argument);
}

TEST_CASE("forward edge cases") {
  auto m = model::generate_model(seed_of(3), std::vector<std::size_t>{3, 3});
  for (auto& w : m.layers[0].weights.data) w = raw(0);
  m.layers[0].bias = {raw(7), raw(-8), raw(9)};
  CHECK(model::forward(m, model::Vector{raw(1), raw(2), raw(3)}) == m.layers[0].bias);

  for (std::size_t i = 0; i < 3; ++i) m.layers[0].weights(i, i) = raw(Fixed::kOne);
  for (auto& b : m.layers[0].bias) b = raw(0);
  const model::Vector x{raw(-5), raw(6), raw(70000)};
  CHECK(model::forward(m, x) == x);
  CHECK_THROWS_AS(model::forward(m, model::Vector{raw(1)}), std::invalid_argument);
}

TEST_CASE("forward matches an independent evaluation and a frozen golden") {
  const auto m = model::generate_model(seed_of(5), std::vector<std::size_t>{8, 16, 8, 4});
  const model::Vector x = model::random_vector(seed_of(6), "x", 8);
  const model::Vector y = model::forward(m, x);
  CHECK(y == reference_forward(m, x));
  CHECK(model::forward(m, x) == y);
  CHECK(crypto::to_hex(crypto::sha256(model::encode(y))) ==
        "ffcc0f1870ecc1d9a69313c8a3f4e09c0a360d51dbdd2066443b2204fc0cdc43");
}

TEST_CASE("random inputs agree with the reference") {
  const auto m = model::generate_model(seed_of(8), std::vector<std::size_t>{8, 16, 8, 4});
  for (std::uint64_t k = 0; k < 200; ++k) {
    const model::Vector x = model::random_vector(crypto::derive_seed(seed_of(9), "x", k), "x", 8);
    CHECK(model::forward(m, x) == reference_forward(m, x));
  }
}

TEST_CASE("corruption modes") {
  CHECK(model::corrupt(model::Vector{raw(0)}, model::CorruptMode::flip_last_bit) == model::Vector{raw(1)});
  const auto c = model::corrupt(model::Vector{raw(5), raw(9)}, model::CorruptMode::constant);
  CHECK(c == model::Vector{raw(0x2A), raw(0x2A)});
  const auto o = model::corrupt(model::Vector{raw(5), raw(9)}, model::CorruptMode::offset);
  CHECK(o == model::Vector{raw(6), raw(10)});
  const model::Vector already{raw(0x2A)};
  CHECK(model::corrupt(already, model::CorruptMode::constant) != already);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    model::Vector y{raw(static_cast<std::int64_t>(rng()) >> 20), raw(0x2A)};
    for (auto mode : {model::CorruptMode::flip_last_bit, model::CorruptMode::constant, model::CorruptMode::offset}) {
      CHECK(model::corrupt(y, mode) != y);
      CHECK(model::corrupt(y, mode) == model::corrupt(y, mode));
    }
  }
}

TEST_CASE("vector encoding round trip") {
  const model::Vector v{raw(-1), raw(0), raw(1), raw(std::numeric_limits<std::int64_t>::min())};
  CHECK(model::decode(model::encode(v)) == v);
  CHECK(model::encode(v).size() == 4 * 8);
  CHECK_THROWS_AS(model::decode(crypto::Bytes{1, 2, 3}), std::invalid_argument);
}
