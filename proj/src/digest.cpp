#include "advstego/digest.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <stdexcept>

#include <openssl/evp.h>

namespace advstego {

namespace {
EVP_MD_CTX* as_ctx(void* p) { return static_cast<EVP_MD_CTX*>(p); }
}  // namespace

Digest::Digest() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(as_ctx(ctx_), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
}

Digest::~Digest() { EVP_MD_CTX_free(as_ctx(ctx_)); }

Digest& Digest::update(std::span<const std::uint8_t> bytes) {
  EVP_DigestUpdate(as_ctx(ctx_), bytes.data(), bytes.size());
  return *this;
}

Digest& Digest::update(std::string_view text) {
  EVP_DigestUpdate(as_ctx(ctx_), text.data(), text.size());
  return *this;
}

Digest& Digest::update(std::span<const float> values) {
  // Little-endian IEEE bytes so digests agree across hosts.
  for (float v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    std::array<std::uint8_t, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    EVP_DigestUpdate(as_ctx(ctx_), b.data(), b.size());
  }
  return *this;
}

Digest& Digest::update_u64(std::uint64_t value) {
  std::array<std::uint8_t, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(value >> (8 * i));
  EVP_DigestUpdate(as_ctx(ctx_), b.data(), b.size());
  return *this;
}

std::string Digest::hex() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(as_ctx(ctx_), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  Digest d;
  d.update(bytes);
  return d.hex();
}

}  // namespace advstego
