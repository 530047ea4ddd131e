#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Message arithmetic: binary <-> base-N digits, chunking of digit streams
// into runs of distinct classes, and capacity/density analytics.
namespace advstego::codec {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Digit = std::uint32_t;

struct BitMessage {
  std::vector<std::uint8_t> bits;  // each element 0 or 1

  std::size_t length() const { return bits.size(); }
  bool operator==(const BitMessage&) const = default;

  static BitMessage from_bytes(const std::vector<std::uint8_t>& bytes);
  static BitMessage from_hex(const std::string& hex);
  /// Packs bits MSB-first; the final byte is zero-padded on the right.
  std::vector<std::uint8_t> to_bytes() const;
  std::string to_hex() const;
};

struct DigitMessage {
  std::vector<Digit> digits;
  Digit base = 10;
  std::size_t bit_length = 0;

  bool operator==(const DigitMessage&) const = default;
};

using Chunk = std::vector<Digit>;

struct ChunkPlan {
  std::vector<Chunk> chunks;
  std::size_t k = 1;
  Digit base = 10;

  std::size_t digit_count() const;
  std::vector<std::size_t> chunk_lengths() const;
};

/// Smallest L' with base^L' >= 2^bits, computed exactly.
std::size_t required_images(std::size_t bits, Digit base);

/// Big-endian positional conversion, left-padded to required_images digits.
DigitMessage encode_base_n(const BitMessage& message, Digit base);

/// Inverse of encode_base_n. Throws CodecError when the digit value does not
/// fit in bit_length bits or a digit is out of range.
BitMessage decode_base_n(const DigitMessage& digits);

/// Greedy split: a chunk is cut when it reaches k digits or when the next
/// digit already occurs in it.
ChunkPlan split_into_chunks(const DigitMessage& digits, std::size_t k);

std::vector<Digit> concatenate(const ChunkPlan& plan);

/// Bits carried by one digit under the capacity convention (floor(log2 N)),
/// e.g. 3 for N = 10.
unsigned nominal_digit_bits(Digit base);

/// Average bits per image for k = 2: a pair of distinct digits carries two
/// digits, a repeated digit falls back to one digit per image.
double expected_capacity_k2(Digit base);

struct DensityReport {
  double mean_images = 0.0;        // images per message
  double mean_digits = 0.0;        // base-N digits per message
  double bits_per_image = 0.0;     // nominal capacity: digits * nominal_digit_bits / images
  double bits_per_pixel = 0.0;     // bits_per_image / pixels_per_image
  double raw_bits_per_pixel = 0.0; // message_bits / (mean_images * pixels_per_image)
};

/// Monte-Carlo density estimate over random messages. Deterministic for a
/// fixed seed.
DensityReport simulate_density(Digit base, std::size_t k,
                               std::size_t num_messages,
                               std::size_t message_bits,
                               std::size_t pixels_per_image,
                               std::uint64_t seed);

}  // namespace advstego::codec
