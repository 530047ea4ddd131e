#include "advstego/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <png.h>

#include "advstego/digest.hpp"
#include "advstego/random.hpp"

namespace advstego::data {

namespace fs = std::filesystem;

std::uint8_t to_byte(float x) {
  const float clamped = std::clamp(x, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0f + 0.5f));
}

Image quantize_image(const Image& image) {
  Image out = image;
  for (float& v : out.data) v = from_byte(to_byte(v));
  return out;
}

std::string dataset_digest(const LabeledDataset& dataset) {
  Digest d;
  d.update("advstego-dataset").update_u64(dataset.num_classes).update_u64(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t s : dataset.images[i].shape) d.update_u64(s);
    d.update(dataset.images[i].values());
    d.update_u64(dataset.labels[i]);
  }
  return d.hex();
}

void validate(const LabeledDataset& dataset) {
  if (dataset.images.size() != dataset.labels.size())
    throw DataError("dataset has " + std::to_string(dataset.images.size()) + " images but " +
                    std::to_string(dataset.labels.size()) + " labels");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] >= dataset.num_classes)
      throw DataError("label " + std::to_string(dataset.labels[i]) + " out of range");
    if (dataset.images[i].shape != dataset.images.front().shape)
      throw DataError("mixed image dimensions in dataset");
    for (float v : dataset.images[i].data)
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel outside [0,1]");
  }
}

// --- CIFAR-10 --------------------------------------------------------------

LabeledDataset parse_cifar10_records(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw DataError("CIFAR-10 file size " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes));
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  LabeledDataset ds;
  ds.num_classes = 10;
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  ds.images.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9)
      throw DataError("CIFAR-10 record " + std::to_string(r) + " has label " +
                      std::to_string(rec[0]));
    Image img = make_image(kCifarSide, kCifarSide, 3);
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) img[p * 3 + c] = from_byte(rec[1 + c * plane + p]);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(rec[0]);
  }
  ds.id = dataset_digest(ds);
  return ds;
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledDataset load_cifar10_binary(const fs::path& path) {
  return parse_cifar10_records(read_file(path));
}

LabeledDataset load_cifar10_binary(const std::vector<fs::path>& paths) {
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    const auto bytes = read_file(p);
    if (bytes.size() % kCifarRecordBytes != 0)
      throw DataError(p.string() + ": size is not a multiple of 3073");
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar10_records(all);
}

// --- PNG -------------------------------------------------------------------

void save_png(const Image& image, const fs::path& path) {
  if (image.shape.size() != 3 || (image.channels() != 3 && image.channels() != 1))
    throw DataError("save_png: need an HxWx3 or HxWx1 image, got " + shape_string(image.shape));
  std::vector<std::uint8_t> buffer(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buffer[i] = to_byte(image[i]);

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

Image load_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("cannot read PNG " + path.string() + ": " + png.message);
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img = make_image(png.height, png.width, channels);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = from_byte(buffer[i]);
  return img;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".png"))
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<Image> load_png_images(const fs::path& dir) {
  std::vector<Image> out;
  for (const auto& p : sorted_entries(dir, false)) {
    out.push_back(load_png(p));
    if (out.back().shape != out.front().shape)
      throw DataError("mixed image dimensions: " + p.string());
  }
  return out;
}

LabeledDataset load_png_dir(const fs::path& root) {
  LabeledDataset ds;
  const auto classes = sorted_entries(root, true);
  for (std::size_t label = 0; label < classes.size(); ++label) {
    for (const auto& p : sorted_entries(classes[label], false)) {
      Image img = load_png(p);
      if (!ds.images.empty() && img.shape != ds.images.front().shape)
        throw DataError("mixed image dimensions: " + p.string());
      ds.images.push_back(std::move(img));
      ds.labels.push_back(static_cast<std::uint32_t>(label));
    }
  }
  if (ds.empty()) throw DataError("no PNG images under " + root.string());
  ds.num_classes = classes.size();
  ds.id = dataset_digest(ds);
  return ds;
}

// --- Synthetic -------------------------------------------------------------

namespace {

struct Grating {
  double fx, fy, phase, amplitude;
  std::vector<double> channel_gain;
};

}  // namespace

namespace {

std::vector<Grating> random_gratings(std::size_t count, double amp_lo, double amp_hi,
                                     double freq_lo, double freq_hi, std::size_t channels,
                                     Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Grating> gratings(count);
  for (auto& g : gratings) {
    const double angle = u(rng) * std::numbers::pi;
    const double freq = freq_lo + (freq_hi - freq_lo) * u(rng);  // cycles across the image
    g.fx = freq * std::cos(angle);
    g.fy = freq * std::sin(angle);
    g.phase = u(rng) * 2.0 * std::numbers::pi;
    g.amplitude = amp_lo + (amp_hi - amp_lo) * u(rng);
    g.channel_gain.resize(channels);
    for (auto& c : g.channel_gain) c = 0.4 + 0.6 * u(rng);
  }
  return gratings;
}

void add_gratings(Image& img, const std::vector<Grating>& gratings) {
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t y = 0; y < img.height(); ++y) {
    const double ny = static_cast<double>(y) / static_cast<double>(img.height());
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double nx = static_cast<double>(x) / static_cast<double>(img.width());
      for (const auto& g : gratings) {
        const double s = g.amplitude * std::sin(two_pi * (g.fx * nx + g.fy * ny) + g.phase);
        for (std::size_t c = 0; c < img.channels(); ++c)
          img.at(y, x, c) += static_cast<float>(s * g.channel_gain[c]);
      }
    }
  }
}

}  // namespace

LabeledDataset synth_dataset(const SynthOptions& o) {
  if (o.num_classes < 2) throw DataError("synthetic dataset needs N >= 2");
  if (o.height == 0 || o.width == 0 || o.channels == 0) throw DataError("bad synthetic dims");
  if (o.noise_sigma < 0.0 || o.pixel_noise < 0.0) throw DataError("negative synthetic noise");
  // Shared scene: low-contrast, low-frequency shading with one clipped
  // highlight and one clipped shadow. Classes differ by fainter, finer
  // gratings and a colour cast on top of it.
  constexpr double scene_lo = 0.25, scene_hi = 0.75;
  constexpr double blob_amp = 0.8, blob_radius = 5.0 / 32.0;
  constexpr double class_lo = 0.015, class_hi = 0.04;
  constexpr double bias_amp = 0.03;

  Image shared = make_image(o.height, o.width, o.channels, 0.0f);
  {
    Rng rng = make_rng(o.seed, {0x5a4ed});
    add_gratings(shared, random_gratings(3, 1.0, 1.0, 0.1, 0.6, o.channels, rng));
    const auto [lo, hi] = std::minmax_element(shared.data.begin(), shared.data.end());
    const double min = *lo, range = std::max(1e-9, static_cast<double>(*hi - *lo));
    for (float& v : shared.data)
      v = static_cast<float>(scene_lo + (v - min) / range * (scene_hi - scene_lo));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = blob_radius * static_cast<double>(std::min(o.height, o.width));
    for (double sign : {1.0, -1.0}) {
      const double cy = u(rng) * static_cast<double>(o.height);
      const double cx = u(rng) * static_cast<double>(o.width);
      for (std::size_t y = 0; y < o.height; ++y)
        for (std::size_t x = 0; x < o.width; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          const auto g = static_cast<float>(sign * blob_amp * std::exp(-d2 / (2 * r * r)));
          for (std::size_t c = 0; c < o.channels; ++c) shared.at(y, x, c) += g;
        }
    }
  }
  std::vector<Image> bases;
  for (std::size_t cls = 0; cls < o.num_classes; ++cls) {
    Rng rng = make_rng(o.seed, {0x5e7, cls});
    Image base = shared;
    add_gratings(base, random_gratings(3, class_lo, class_hi, 1.0, 6.0, o.channels, rng));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t c = 0; c < o.channels; ++c) {
      const auto bias = static_cast<float>(bias_amp * u(rng));
      for (std::size_t p = 0; p < o.height * o.width; ++p) base[p * o.channels + c] += bias;
    }
    bases.push_back(std::move(base));
  }

  LabeledDataset ds;
  ds.num_classes = o.num_classes;
  Rng noise_rng = make_rng(o.seed, {0x9015e, o.split});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < o.per_class; ++i) {
    for (std::size_t cls = 0; cls < o.num_classes; ++cls) {
      Image img = bases[cls];
      if (o.noise_sigma > 0.0)
        add_gratings(img, random_gratings(2, o.noise_sigma, o.noise_sigma, 0.3, 1.5, o.channels,
                                          noise_rng));
      for (float& v : img.data) {
        const double n = o.pixel_noise > 0.0 ? o.pixel_noise * noise(noise_rng) : 0.0;
        v = from_byte(to_byte(static_cast<float>(v + n)));
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(static_cast<std::uint32_t>(cls));
    }
  }
  ds.id = dataset_digest(ds);
  return ds;
}

}  // namespace advstego::data
