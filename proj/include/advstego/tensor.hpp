#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace advstego {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 tensor. Images use shape {height, width, channels}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f)
      : shape(std::move(dims)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }

  std::span<float> values() { return data; }
  std::span<const float> values() const { return data; }

  std::size_t height() const { return shape.at(0); }
  std::size_t width() const { return shape.at(1); }
  std::size_t channels() const { return shape.size() > 2 ? shape[2] : 1; }

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * shape[1] + x) * shape[2] + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * shape[1] + x) * shape[2] + c];
  }

  bool operator==(const Tensor&) const = default;
};

using Image = Tensor;

inline Image make_image(std::size_t height, std::size_t width,
                        std::size_t channels, float fill = 0.0f) {
  return Image({height, width, channels}, fill);
}

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
}

inline double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

inline double l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace advstego
