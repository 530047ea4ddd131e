#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "advstego/data.hpp"
#include "advstego/tensor.hpp"

// The secret key: a small deterministic CNN classifier. Inference, training,
// input gradients and the key-file format live here.
namespace advstego::nn {

using ClassId = std::uint32_t;

class ArchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t kernel = 0;        // conv
  std::size_t out_channels = 0;  // conv
  std::size_t stride = 1;        // conv
  std::size_t units = 0;         // dense

  static LayerSpec conv(std::size_t kernel, std::size_t out_channels, std::size_t stride = 1) {
    return {LayerKind::Conv, kernel, out_channels, stride, 0};
  }
  static LayerSpec relu() { return {LayerKind::Relu}; }
  static LayerSpec maxpool() { return {LayerKind::MaxPool}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, 0, 0, 1, units}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Input dims plus an ordered layer list. Convolutions use zero "same"
/// padding (kernel / 2); maxpool is 2x2 with stride 2.
struct ArchSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::vector<LayerSpec> layers;

  std::size_t num_classes() const;
  std::vector<std::size_t> input_shape() const { return {height, width, channels}; }
  bool operator==(const ArchSpec&) const = default;
};

/// conv(3,16)-relu-maxpool-conv(3,32)-relu-maxpool-flatten-dense(64)-relu-dense(N)
ArchSpec desk_arch(std::size_t num_classes, std::size_t height = 32, std::size_t width = 32,
                   std::size_t channels = 3);

/// Family member: `depth` conv blocks with 8*width_multiplier*2^i channels,
/// dense hidden layer of 32*width_multiplier units.
ArchSpec family_arch(std::size_t num_classes, double width_multiplier, std::size_t depth,
                     std::size_t height = 32, std::size_t width = 32, std::size_t channels = 3);

/// Throws ArchError unless the layers chain and end in dense(N >= 2).
void validate(const ArchSpec& arch);

/// Weight shapes in storage order: conv {out, in, k, k} then bias {out};
/// dense {in, units} then bias {units}.
std::vector<std::vector<std::size_t>> parameter_shapes(const ArchSpec& arch);

std::string arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const std::string& text);

struct ModelKey {
  ArchSpec arch;
  std::vector<Tensor> weights;
  std::uint64_t seed = 0;
  std::string fingerprint;

  std::size_t num_classes() const { return arch.num_classes(); }
  bool operator==(const ModelKey&) const = default;
};

/// He-style fan-in scaled uniform weights, zero biases.
ModelKey build_model(const ArchSpec& arch, std::uint64_t seed);

struct TrainingConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double train_accuracy = 0.0;  // on the full dataset after the last epoch
  double final_loss = 0.0;      // mean cross-entropy over the last epoch
};

/// SGD with momentum, shuffle order drawn from config.seed. Updates the
/// weights and fingerprint in place.
TrainReport train(ModelKey& model, const data::LabeledDataset& dataset,
                  const TrainingConfig& config);

double accuracy(const ModelKey& model, const data::LabeledDataset& dataset);

std::vector<float> logits(const ModelKey& model, const Image& image);

/// Softmax probabilities, length N.
std::vector<float> predict(const ModelKey& model, const Image& image);

/// Classes by descending probability; ties go to the lower class index.
std::vector<ClassId> top_k_from_probabilities(std::span<const float> probabilities, std::size_t k);
std::vector<ClassId> top_k_classes(const ModelKey& model, const Image& image, std::size_t k);

/// d CE(predict(image), target) / d image.
Tensor loss_gradient_wrt_input(const ModelKey& model, const Image& image, ClassId target);

/// d (sum_i weights[i] * CE(predict(image), classes[i])) / d image in one
/// backward pass. With weights {1, 0, ...} this equals the single-class
/// gradient exactly.
Tensor weighted_loss_gradient(const ModelKey& model, const Image& image,
                              std::span<const ClassId> classes, std::span<const float> weights);

// Key file: "ADVK", u16 LE version, u32 LE header length, JSON header,
// little-endian float32 weights in header order.
inline constexpr std::uint16_t kKeyFileVersion = 1;

class KeyFileError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, BadHeader, ShapeMismatch };
  KeyFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> serialize_key(const ModelKey& model);
ModelKey deserialize_key(std::span<const std::uint8_t> bytes);
void save_key(const ModelKey& model, const std::filesystem::path& path);
ModelKey load_key(const std::filesystem::path& path);

struct FamilyGridPoint {
  double width_multiplier = 1.0;
  std::size_t depth = 2;
};

struct FamilyTraining {
  const data::LabeledDataset* dataset = nullptr;
  TrainingConfig config;
};

/// One model per (grid point, seed), grid-major. Trained when `training` is
/// given (each member trains with its own seed).
std::vector<ModelKey> generate_model_family(const std::vector<FamilyGridPoint>& grid,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::size_t num_classes,
                                            const std::vector<std::size_t>& input_shape,
                                            const std::optional<FamilyTraining>& training = {});

}  // namespace advstego::nn
