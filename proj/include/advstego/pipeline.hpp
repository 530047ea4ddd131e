#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "advstego/attack.hpp"
#include "advstego/codec.hpp"
#include "advstego/data.hpp"
#include "advstego/neuralkey.hpp"

// End-to-end embedding and extraction of bit messages.
namespace advstego::pipeline {

inline constexpr int kManifestVersion = 1;

/// Metadata the recipient needs besides the key. Travels next to the
/// images as manifest.json; it is not hidden.
struct Manifest {
  int version = kManifestVersion;
  codec::Digit n = 10;
  std::size_t k = 1;
  std::size_t bit_length = 0;
  std::vector<std::size_t> chunk_lengths;
  std::vector<std::string> images;  // filenames, in message order
  std::optional<std::string> key_fingerprint;

  bool operator==(const Manifest&) const = default;
};

struct StegoSequence {
  std::vector<Image> images;  // 8-bit quantized, in message order
  Manifest manifest;
};

class EmbedError : public std::runtime_error {
 public:
  EmbedError(const std::string& what, std::vector<std::size_t> failed)
      : std::runtime_error(what), failed_chunks(std::move(failed)) {}
  std::vector<std::size_t> failed_chunks;
};

class ExtractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using data::quantize_image;

/// Zero-padded so lexical order equals message order.
std::string image_filename(std::size_t index);

/// Checks image count, chunk-length bounds and sum against
/// required_images(bit_length, n). Throws ExtractError.
void validate_manifest(const Manifest& manifest, std::size_t image_count);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

/// encode -> chunk -> SATA. All or nothing: throws EmbedError naming the
/// failed chunks if any chunk is still wrong after every restart.
StegoSequence embed_message(const codec::BitMessage& bits, const nn::ModelKey& model,
                            std::span<const Image> cover_pool,
                            const attack::AttackConfig& config, std::uint64_t seed,
                            attack::AttackOutcome* outcome = nullptr);

/// Reads the ordered top-(chunk length) classes of each image and decodes
/// them with the manifest's base and bit length.
codec::BitMessage extract_message(const StegoSequence& stego, const nn::ModelKey& model);

/// Fraction of images whose ordered top-(chunk length) classes under
/// `decoder` equal those under `crafted_with`. An empty sequence gives 1.
double decoding_rate(const StegoSequence& stego, const nn::ModelKey& crafted_with,
                     const nn::ModelKey& decoder);

/// Writes the images as PNG plus manifest.json into `dir` (created).
void save_stego(const StegoSequence& stego, const std::filesystem::path& dir);

/// Reads manifest.json and the PNGs it lists. Throws ExtractError when the
/// manifest is missing or malformed.
StegoSequence load_stego(const std::filesystem::path& dir);

}  // namespace advstego::pipeline
