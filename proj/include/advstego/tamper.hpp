#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advstego/neuralkey.hpp"
#include "advstego/tensor.hpp"

// Image tampering transforms and recovery-rate measurement.
namespace advstego::tamper {

/// Bilinear resize with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

/// Counter-clockwise rotation about the image centre, bilinear sampling,
/// pixels from outside the source are 0.
Image rotate(const Image& img, double degrees);

/// Bilinear rescale; output side = round(side * factor).
Image upscale(const Image& img, double factor);

/// Keeps the central window holding (1 - fraction) of the area and resizes
/// it back to the original dims.
Image center_crop(const Image& img, double area_fraction_removed);

/// Baseline-JPEG information loss without entropy coding: YCbCr (3-channel
/// input), 8x8 DCT, quantization by the standard tables scaled for
/// `quality` in [1,100], inverse DCT, clamp.
Image jpeg_compress(const Image& img, int quality);

/// Quantization table for quality (luminance or chrominance), natural order.
std::vector<int> jpeg_quant_table(int quality, bool chroma);

/// round(x * (2^b - 1)) / (2^b - 1) per channel value.
Image color_depth_reduce(const Image& img, int bits_per_channel);

using Transform = std::function<Image(const Image&)>;

struct NamedTransform {
  std::string name;
  Transform apply;
};

/// The tampering suite: rotate 15, upscale x2, crop 12.5%, JPEG 90/75/50,
/// colour depth 4 and 3 bits per channel.
std::vector<NamedTransform> standard_transforms();

/// Fraction of images whose ordered top-k classes after `transform` (and a
/// resize back to the model input when dims changed) equal the reference.
double recovery_rate(const nn::ModelKey& model, std::span<const Image> stego_images,
                     std::span<const std::vector<nn::ClassId>> reference_classes,
                     const Transform& transform);

}  // namespace advstego::tamper
