#include <doctest.h>
#include <gmp.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "advstego/codec.hpp"
#include "advstego/random.hpp"

using namespace advstego;
using namespace advstego::codec;

namespace {

// Independent big-integer oracle: bits -> mpz -> base-N digits, padded to
// the smallest count with N^count >= 2^L.
struct Mpz {
  mpz_t v;
  Mpz() { mpz_init(v); }
  ~Mpz() { mpz_clear(v); }
  Mpz(const Mpz&) = delete;
  Mpz& operator=(const Mpz&) = delete;
};

std::size_t oracle_required(std::size_t bits, unsigned base) {
  if (bits == 0) return 0;
  Mpz two, p;
  mpz_ui_pow_ui(two.v, 2, bits);
  mpz_set_ui(p.v, 1);
  std::size_t n = 0;
  while (mpz_cmp(p.v, two.v) < 0) {
    mpz_mul_ui(p.v, p.v, base);
    ++n;
  }
  return n;
}

std::vector<Digit> oracle_digits(const BitMessage& m, unsigned base) {
  Mpz value;
  for (auto b : m.bits) {
    mpz_mul_2exp(value.v, value.v, 1);
    if (b) mpz_add_ui(value.v, value.v, 1);
  }
  std::vector<Digit> out(oracle_required(m.length(), base), 0);
  for (std::size_t i = out.size(); i > 0 && mpz_sgn(value.v) != 0; --i)
    out[i - 1] = static_cast<Digit>(mpz_fdiv_q_ui(value.v, value.v, base));
  return out;
}

BitMessage random_bits(std::size_t n, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  BitMessage m;
  for (std::size_t i = 0; i < n; ++i) m.bits.push_back(coin(rng) ? 1 : 0);
  return m;
}

}  // namespace

TEST_SUITE("codec") {

TEST_CASE("required_images examples and exact boundaries") {
  CHECK(required_images(52, 10) == 16);
  CHECK(required_images(0, 10) == 0);
  CHECK(required_images(0, 2) == 0);
  CHECK(required_images(3, 10) == 1);
  CHECK(required_images(4, 10) == 2);
  CHECK(required_images(64, 10) == 20);
  // exact powers: 2^8 = 256 = 16^2 = 4^4
  CHECK(required_images(8, 16) == 2);
  CHECK(required_images(8, 4) == 4);
  CHECK(required_images(8, 256) == 1);
  CHECK(required_images(9, 256) == 2);
  for (unsigned base : {2u, 3u, 7u, 10u, 16u, 100u, 999u, 1000u})
    for (std::size_t bits = 0; bits <= 300; bits += 7)
      CHECK(required_images(bits, base) == oracle_required(bits, base));
  CHECK_THROWS_AS(required_images(8, 1), CodecError);
}

TEST_CASE("required_images monotonicity") {
  for (std::size_t bits = 0; bits < 200; bits += 3) {
    for (unsigned base = 2; base < 60; ++base) {
      CHECK(required_images(bits, base + 1) <= required_images(bits, base));
      CHECK(required_images(bits + 1, base) >= required_images(bits, base));
    }
  }
}

TEST_CASE("encode_base_n worked examples") {
  CHECK(encode_base_n(BitMessage{}, 10).digits.empty());
  const auto ten = encode_base_n(BitMessage{{1, 0, 1, 0}}, 10);
  CHECK(ten.digits == std::vector<Digit>{1, 0});
  CHECK(ten.bit_length == 4);
  CHECK(decode_base_n(ten) == BitMessage{{1, 0, 1, 0}});
  CHECK(decode_base_n(DigitMessage{{0, 0, 0}, 10, 3}) == BitMessage{{0, 0, 0}});
}

TEST_CASE("encode_base_n matches a big-integer oracle for 64-bit messages") {
  Rng rng = make_rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_bits(64, rng);
    const auto d = encode_base_n(m, 10);
    REQUIRE(d.digits.size() == 20);
    CHECK(d.digits == oracle_digits(m, 10));
  }
}

TEST_CASE("round trip over random lengths and bases") {
  Rng rng = make_rng(12);
  std::uniform_int_distribution<std::size_t> len(0, 256);
  std::uniform_int_distribution<unsigned> base(2, 1000);
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_bits(len(rng), rng);
    const unsigned n = base(rng);
    const auto d = encode_base_n(m, n);
    CHECK(d.digits.size() == required_images(m.length(), n));
    CHECK(std::all_of(d.digits.begin(), d.digits.end(), [&](Digit x) { return x < n; }));
    CHECK(d.digits == oracle_digits(m, n));
    CHECK(decode_base_n(d) == m);
  }
}

TEST_CASE("leading zero bits survive the round trip") {
  BitMessage m{{0, 0, 0, 0, 0, 0, 0, 1}};
  CHECK(decode_base_n(encode_base_n(m, 10)) == m);
  BitMessage zeros{std::vector<std::uint8_t>(40, 0)};
  const auto d = encode_base_n(zeros, 7);
  CHECK(std::all_of(d.digits.begin(), d.digits.end(), [](Digit x) { return x == 0; }));
  CHECK(decode_base_n(d) == zeros);
}

TEST_CASE("decode rejects overflowing or out-of-range digits") {
  CHECK_THROWS_AS(decode_base_n(DigitMessage{{9, 9}, 10, 4}), CodecError);  // 99 > 15
  CHECK_THROWS_AS(decode_base_n(DigitMessage{{1, 10}, 10, 8}), CodecError);
  CHECK_NOTHROW(decode_base_n(DigitMessage{{1, 5}, 10, 4}));
}

TEST_CASE("hex and byte helpers") {
  const auto m = BitMessage::from_hex("68656c6c6f");
  CHECK(m.length() == 40);
  CHECK(m.to_hex() == "68656c6c6f");
  CHECK(BitMessage::from_bytes({'h', 'e', 'l', 'l', 'o'}) == m);
  CHECK(BitMessage{{1, 0, 1}}.to_bytes() == std::vector<std::uint8_t>{0xa0});
  CHECK_THROWS_AS(BitMessage::from_hex("zz"), CodecError);
}

TEST_CASE("split_into_chunks worked example") {
  // 29234652 < 2^25, so a 25-bit message in base 100 gives four digits.
  BitMessage m;
  for (int i = 24; i >= 0; --i) m.bits.push_back((29234652u >> i) & 1u);
  const auto d = encode_base_n(m, 100);
  REQUIRE(d.digits == std::vector<Digit>{29, 23, 46, 52});
  const auto plan = split_into_chunks(d, 3);
  CHECK(plan.chunks == std::vector<Chunk>{{29, 23, 46}, {52}});
  CHECK(plan.chunk_lengths() == std::vector<std::size_t>{3, 1});

  CHECK(split_into_chunks(DigitMessage{{3, 3}, 10, 0}, 3).chunks == std::vector<Chunk>{{3}, {3}});
  CHECK(split_into_chunks(DigitMessage{{1, 2, 1, 3}, 10, 0}, 3).chunks ==
        std::vector<Chunk>{{1, 2}, {1, 3}});
  CHECK(split_into_chunks(DigitMessage{{}, 10, 0}, 2).chunks.empty());
  CHECK_THROWS_AS(split_into_chunks(DigitMessage{{1}, 10, 0}, 0), CodecError);
  CHECK_THROWS_AS(split_into_chunks(DigitMessage{{1}, 10, 0}, 11), CodecError);
}

TEST_CASE("split_into_chunks properties over random streams") {
  Rng rng = make_rng(13);
  std::uniform_int_distribution<unsigned> base_d(2, 20);
  std::uniform_int_distribution<std::size_t> len_d(0, 60);
  for (int i = 0; i < 10000; ++i) {
    const unsigned n = base_d(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    DigitMessage d{{}, n, 0};
    std::uniform_int_distribution<Digit> digit(0, n - 1);
    for (std::size_t j = len_d(rng); j > 0; --j) d.digits.push_back(digit(rng));
    const auto plan = split_into_chunks(d, k);
    REQUIRE(concatenate(plan) == d.digits);
    CHECK(plan.chunks.size() >= (d.digits.size() + k - 1) / k);
    for (std::size_t c = 0; c < plan.chunks.size(); ++c) {
      const auto& chunk = plan.chunks[c];
      CHECK(!chunk.empty());
      CHECK(chunk.size() <= k);
      CHECK(std::set<Digit>(chunk.begin(), chunk.end()).size() == chunk.size());
      // greedy: a short chunk is only cut when the next digit repeats in it
      if (chunk.size() < k && c + 1 < plan.chunks.size()) {
        const Digit next = plan.chunks[c + 1].front();
        CHECK(std::find(chunk.begin(), chunk.end(), next) != chunk.end());
      }
    }
  }
}

TEST_CASE("capacity for k = 2") {
  CHECK(nominal_digit_bits(10) == 3);
  CHECK(nominal_digit_bits(2) == 1);
  CHECK(nominal_digit_bits(100) == 6);
  CHECK(expected_capacity_k2(10) == doctest::Approx(5.7).epsilon(1e-12));
  CHECK(expected_capacity_k2(2) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("simulate_density") {
  const auto k1 = simulate_density(10, 1, 100, 3, 3072, 1);
  CHECK(k1.mean_images == 1.0);
  CHECK(k1.bits_per_pixel == 3.0 / 3072.0);
  CHECK(k1.raw_bits_per_pixel == 3.0 / 3072.0);

  // k = 1 equals the required_images density exactly for any length
  const auto k1_long = simulate_density(10, 1, 5, 6643, 3072, 2);
  CHECK(k1_long.mean_images == static_cast<double>(required_images(6643, 10)));

  const auto k2 = simulate_density(10, 2, 1000, 6643, 3072, 3);
  CHECK(k2.bits_per_pixel == doctest::Approx(1.86e-3).epsilon(0.05));
  CHECK(k2.bits_per_image == doctest::Approx(expected_capacity_k2(10)).epsilon(0.02));

  CHECK(simulate_density(10, 2, 50, 640, 3072, 9).mean_images ==
        simulate_density(10, 2, 50, 640, 3072, 9).mean_images);

  double previous = 0.0;
  for (std::size_t k = 2; k <= 9; ++k) {
    const double bpp = simulate_density(10, k, 100, 640, 3072, 4).bits_per_pixel;
    CHECK(bpp > previous);
    previous = bpp;
  }
  CHECK_THROWS_AS(simulate_density(10, 11, 1, 8, 3072, 0), CodecError);
}

}
