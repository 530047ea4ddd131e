#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advstego/data.hpp"
#include "advstego/neuralkey.hpp"

namespace fixtures {

using advstego::Image;

inline constexpr std::uint64_t kDataSeed = 1;
inline constexpr std::uint64_t kModelSeed = 7;

/// Synthetic training set for an N-class desk model (cached per N).
const advstego::data::LabeledDataset& training_set(std::size_t num_classes);

/// desk_arch(N) trained for 10 epochs on training_set(N) (cached per N).
const advstego::nn::ModelKey& desk_model(std::size_t num_classes);

/// Held-out covers drawn from the same class patterns (split 1), 10 per class.
const std::vector<Image>& cover_pool(std::size_t num_classes);

/// 128x128 RGB crops of two natural photographs from tests/data.
const std::vector<Image>& natural_images();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace fixtures
