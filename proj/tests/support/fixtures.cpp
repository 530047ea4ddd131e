#include "support/fixtures.hpp"

#include <fstream>
#include <iterator>
#include <map>
#include <unistd.h>

namespace fixtures {

namespace data = advstego::data;
namespace nn = advstego::nn;

namespace {

std::size_t per_class_for(std::size_t num_classes) { return num_classes <= 4 ? 200 : 100; }

}  // namespace

const data::LabeledDataset& training_set(std::size_t num_classes) {
  static std::map<std::size_t, data::LabeledDataset> cache;
  auto it = cache.find(num_classes);
  if (it == cache.end()) {
    data::SynthOptions opt;
    opt.num_classes = num_classes;
    opt.per_class = per_class_for(num_classes);
    opt.seed = kDataSeed;
    it = cache.emplace(num_classes, data::synth_dataset(opt)).first;
  }
  return it->second;
}

const nn::ModelKey& desk_model(std::size_t num_classes) {
  static std::map<std::size_t, nn::ModelKey> cache;
  auto it = cache.find(num_classes);
  if (it == cache.end()) {
    nn::ModelKey model = nn::build_model(nn::desk_arch(num_classes), kModelSeed);
    nn::TrainingConfig config;
    config.seed = kModelSeed;
    nn::train(model, training_set(num_classes), config);
    it = cache.emplace(num_classes, std::move(model)).first;
  }
  return it->second;
}

const std::vector<Image>& cover_pool(std::size_t num_classes) {
  static std::map<std::size_t, std::vector<Image>> cache;
  auto it = cache.find(num_classes);
  if (it == cache.end()) {
    data::SynthOptions opt;
    opt.num_classes = num_classes;
    opt.per_class = 10;
    opt.seed = kDataSeed;
    opt.split = 1;
    it = cache.emplace(num_classes, data::synth_dataset(opt).images).first;
  }
  return it->second;
}

const std::vector<Image>& natural_images() {
  static const std::vector<Image> images = [] {
    const std::filesystem::path dir = ADVSTEGO_TEST_DATA_DIR;
    return std::vector<Image>{data::load_png(dir / "natural_astronaut.png"),
                              data::load_png(dir / "natural_rocket.png")};
  }();
  return images;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("advstego_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
