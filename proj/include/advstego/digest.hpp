#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace advstego {

/// Incremental SHA-256 returning lowercase hex.
class Digest {
 public:
  Digest();
  ~Digest();
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;

  Digest& update(std::span<const std::uint8_t> bytes);
  Digest& update(std::string_view text);
  Digest& update(std::span<const float> values);
  Digest& update_u64(std::uint64_t value);
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace advstego
