#include "advstego/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_int.hpp>

#include "advstego/random.hpp"

namespace advstego::codec {

namespace mp = boost::multiprecision;

namespace {

void require_base(Digit base) {
  if (base < 2) throw CodecError("base must be >= 2, got " + std::to_string(base));
}

// Largest power base^m that fits in 64 bits, with its exponent m.
std::pair<std::uint64_t, std::size_t> word_power(Digit base) {
  std::uint64_t p = base;
  std::size_t m = 1;
  while (p <= std::numeric_limits<std::uint64_t>::max() / base) {
    p *= base;
    ++m;
  }
  return {p, m};
}

bool power_covers(Digit base, std::size_t exponent, std::size_t bits) {
  if (bits == 0) return true;
  if (exponent == 0) return false;
  const mp::cpp_int p = mp::pow(mp::cpp_int(base), static_cast<unsigned>(exponent));
  return mp::msb(p) >= bits;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

BitMessage BitMessage::from_bytes(const std::vector<std::uint8_t>& bytes) {
  BitMessage m;
  m.bits.reserve(bytes.size() * 8);
  for (std::uint8_t b : bytes)
    for (int i = 7; i >= 0; --i) m.bits.push_back((b >> i) & 1u);
  return m;
}

BitMessage BitMessage::from_hex(const std::string& hex) {
  BitMessage m;
  for (char c : hex) {
    const int v = hex_value(c);
    if (v < 0) throw CodecError(std::string("invalid hex digit '") + c + "'");
    for (int i = 3; i >= 0; --i) m.bits.push_back((v >> i) & 1);
  }
  return m;
}

std::vector<std::uint8_t> BitMessage::to_bytes() const {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

std::string BitMessage::to_hex() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (std::uint8_t b : to_bytes()) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

std::size_t ChunkPlan::digit_count() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c.size();
  return n;
}

std::vector<std::size_t> ChunkPlan::chunk_lengths() const {
  std::vector<std::size_t> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(c.size());
  return out;
}

std::size_t required_images(std::size_t bits, Digit base) {
  require_base(base);
  if (bits == 0) return 0;
  // Floating-point estimate, then exact correction against base^L' >= 2^L.
  auto count = static_cast<std::size_t>(
      std::ceil(static_cast<double>(bits) * std::log(2.0) / std::log(static_cast<double>(base))));
  count = std::max<std::size_t>(count, 1);
  while (count > 1 && power_covers(base, count - 1, bits)) --count;
  while (!power_covers(base, count, bits)) ++count;
  return count;
}

DigitMessage encode_base_n(const BitMessage& message, Digit base) {
  require_base(base);
  DigitMessage out;
  out.base = base;
  out.bit_length = message.length();
  const std::size_t count = required_images(message.length(), base);
  out.digits.assign(count, 0);
  if (count == 0) return out;

  mp::cpp_int value;
  mp::import_bits(value, message.bits.begin(), message.bits.end(), 1, true);

  const auto [word, per_word] = word_power(base);
  std::size_t pos = count;
  while (value != 0 && pos > 0) {
    mp::cpp_int quotient;
    mp::cpp_int remainder;
    mp::divide_qr(value, mp::cpp_int(word), quotient, remainder);
    auto low = remainder.convert_to<std::uint64_t>();
    for (std::size_t i = 0; i < per_word && pos > 0; ++i) {
      out.digits[--pos] = static_cast<Digit>(low % base);
      low /= base;
    }
    value = std::move(quotient);
  }
  return out;
}

BitMessage decode_base_n(const DigitMessage& digits) {
  require_base(digits.base);
  mp::cpp_int value = 0;
  for (Digit d : digits.digits) {
    if (d >= digits.base) {
      throw CodecError("digit " + std::to_string(d) + " out of range for base " +
                       std::to_string(digits.base));
    }
    value *= digits.base;
    value += d;
  }
  const std::size_t L = digits.bit_length;
  if (value != 0 && mp::msb(value) >= L) {
    throw CodecError("digit value exceeds 2^" + std::to_string(L) +
                     " - 1: corrupt stego sequence");
  }
  BitMessage out;
  out.bits.resize(L);
  for (std::size_t i = 0; i < L; ++i)
    out.bits[i] = mp::bit_test(value, static_cast<unsigned>(L - 1 - i)) ? 1 : 0;
  return out;
}

ChunkPlan split_into_chunks(const DigitMessage& digits, std::size_t k) {
  require_base(digits.base);
  if (k < 1 || k > digits.base) {
    throw CodecError("chunk size k must satisfy 1 <= k <= N (k=" + std::to_string(k) +
                     ", N=" + std::to_string(digits.base) + ")");
  }
  ChunkPlan plan;
  plan.k = k;
  plan.base = digits.base;
  Chunk current;
  for (Digit d : digits.digits) {
    const bool repeated = std::find(current.begin(), current.end(), d) != current.end();
    if (repeated || current.size() == k) {
      plan.chunks.push_back(std::move(current));
      current.clear();
    }
    current.push_back(d);
  }
  if (!current.empty()) plan.chunks.push_back(std::move(current));
  return plan;
}

std::vector<Digit> concatenate(const ChunkPlan& plan) {
  std::vector<Digit> out;
  out.reserve(plan.digit_count());
  for (const auto& c : plan.chunks) out.insert(out.end(), c.begin(), c.end());
  return out;
}

unsigned nominal_digit_bits(Digit base) {
  require_base(base);
  return static_cast<unsigned>(std::bit_width(base) - 1);
}

double expected_capacity_k2(Digit base) {
  require_base(base);
  const double b = nominal_digit_bits(base);
  const double repeat = 1.0 / base;
  return 2.0 * b * (1.0 - repeat) + b * repeat;
}

DensityReport simulate_density(Digit base, std::size_t k, std::size_t num_messages,
                               std::size_t message_bits, std::size_t pixels_per_image,
                               std::uint64_t seed) {
  require_base(base);
  if (k < 1 || k > base) throw CodecError("simulate_density: need 1 <= k <= N");
  if (num_messages == 0 || pixels_per_image == 0)
    throw CodecError("simulate_density: need at least one message and one pixel");

  Rng rng = make_rng(seed, {0xde45});
  std::bernoulli_distribution coin(0.5);
  double images = 0.0;
  double digits = 0.0;
  BitMessage message;
  message.bits.resize(message_bits);
  for (std::size_t m = 0; m < num_messages; ++m) {
    for (auto& b : message.bits) b = coin(rng) ? 1 : 0;
    const DigitMessage encoded = encode_base_n(message, base);
    const ChunkPlan plan = split_into_chunks(encoded, k);
    images += static_cast<double>(plan.chunks.size());
    digits += static_cast<double>(encoded.digits.size());
  }

  DensityReport report;
  report.mean_images = images / static_cast<double>(num_messages);
  report.mean_digits = digits / static_cast<double>(num_messages);
  if (report.mean_images > 0.0) {
    report.bits_per_image = report.mean_digits * nominal_digit_bits(base) / report.mean_images;
    report.bits_per_pixel = report.bits_per_image / static_cast<double>(pixels_per_image);
    report.raw_bits_per_pixel = static_cast<double>(message_bits) /
                                (report.mean_images * static_cast<double>(pixels_per_image));
  }
  return report;
}

}  // namespace advstego::codec
