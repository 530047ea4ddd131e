#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "advstego/tensor.hpp"

// Dataset ingestion and 8-bit image I/O.
namespace advstego::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledDataset {
  std::vector<Image> images;  // H x W x C, pixels in [0,1]
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;
  std::string id;  // content digest

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

/// SHA-256 over dims, pixels and labels.
std::string dataset_digest(const LabeledDataset& dataset);

/// Checks the LabeledDataset invariants; throws DataError.
void validate(const LabeledDataset& dataset);

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;

/// CIFAR-10 binary version: 1 label byte followed by 1024 R, 1024 G and
/// 1024 B bytes (row-major 32x32) per record.
LabeledDataset load_cifar10_binary(const std::filesystem::path& path);
LabeledDataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths);
LabeledDataset parse_cifar10_records(const std::vector<std::uint8_t>& bytes);

/// Class subdirectories in sorted order become labels 0..N-1; PNG files
/// inside each are read in sorted order.
LabeledDataset load_png_dir(const std::filesystem::path& root);

/// Plain directory of PNGs (no labels), sorted by filename.
std::vector<Image> load_png_images(const std::filesystem::path& dir);

struct SynthOptions {
  std::size_t num_classes = 10;
  std::size_t per_class = 100;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  // Per-sample variation: a random low-frequency field of this amplitude
  // (like uneven lighting) plus independent per-pixel noise.
  double noise_sigma = 0.1;
  double pixel_noise = 0.004;
  std::uint64_t seed = 0;
  // Selects an independent noise stream over the same class patterns, e.g.
  // 0 for training images and 1 for a cover pool.
  std::uint64_t split = 0;
};

/// Procedural classes: each class has a seeded base pattern built from
/// oriented sinusoidal gratings plus a colour bias over a shared scene;
/// samples add their own low-frequency field and Gaussian pixel noise and
/// are clamped to [0,1] and quantized to 8 bits.
LabeledDataset synth_dataset(const SynthOptions& options);

/// round(x * 255) with halves rounded up, as a byte.
std::uint8_t to_byte(float x);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// round(x*255)/255 per value (halves up); the single quantization rule
/// shared by the attack success check and PNG I/O. Idempotent.
Image quantize_image(const Image& image);

/// 8-bit PNG: RGB for 3-channel images, grayscale for 1-channel.
void save_png(const Image& image, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

}  // namespace advstego::data
