#include "advstego/tamper.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace advstego::tamper {

namespace {

float pixel_or_zero(const Image& img, long y, long x, std::size_t c) {
  if (y < 0 || x < 0 || y >= static_cast<long>(img.height()) || x >= static_cast<long>(img.width()))
    return 0.0f;
  return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
}

void clamp_unit(Image& img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize to an empty image");
  const std::size_t C = img.channels();
  if (height == img.height() && width == img.width()) return img;
  Image out = make_image(height, width, C);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
  const double ymax = static_cast<double>(img.height() - 1);
  const double xmax = static_cast<double>(img.width() - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, ymax);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, xmax);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bottom = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

Image rotate(const Image& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
  Image out = make_image(img.height(), img.width(), img.channels());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      // Inverse map: output (x, y) samples the source at R(-theta) (x, y).
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double v = (1 - wy) * ((1 - wx) * pixel_or_zero(img, y0, x0, c) +
                                     wx * pixel_or_zero(img, y0, x0 + 1, c)) +
                         wy * ((1 - wx) * pixel_or_zero(img, y0 + 1, x0, c) +
                               wx * pixel_or_zero(img, y0 + 1, x0 + 1, c));
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  clamp_unit(out);
  return out;
}

Image upscale(const Image& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("upscale factor must be > 0");
  const auto h = static_cast<std::size_t>(std::max(1.0, std::round(img.height() * factor)));
  const auto w = static_cast<std::size_t>(std::max(1.0, std::round(img.width() * factor)));
  return resize_bilinear(img, h, w);
}

Image center_crop(const Image& img, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("crop fraction must be in [0, 1)");
  const double side = std::sqrt(1.0 - fraction);
  const auto ch = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(img.height() * side)), 1, img.height());
  const auto cw = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(img.width() * side)), 1, img.width());
  const std::size_t y0 = (img.height() - ch) / 2, x0 = (img.width() - cw) / 2;
  Image window = make_image(ch, cw, img.channels());
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x)
      for (std::size_t c = 0; c < img.channels(); ++c)
        window.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return resize_bilinear(window, img.height(), img.width());
}

// --- JPEG ------------------------------------------------------------------

namespace {

constexpr std::array<int, 64> kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChrominance = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  // basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16)
  std::array<std::array<double, 8>, 8> basis{};
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        basis[u][x] = (u == 0 ? std::sqrt(0.125) : 0.5) *
                      std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  }
};

const DctBasis& dct_basis() {
  static const DctBasis b;
  return b;
}

using Block = std::array<double, 64>;

Block forward_dct(const Block& in) {
  const auto& B = dct_basis().basis;
  Block tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += B[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += B[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  return out;
}

Block inverse_dct(const Block& in) {
  const auto& B = dct_basis().basis;
  Block tmp{}, out{};
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int u = 0; u < 8; ++u) s += B[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int v = 0; v < 8; ++v) s += B[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  return out;
}

// Quantize/dequantize one plane (values on the 0..255 scale) in place.
void quantize_plane(std::vector<double>& plane, std::size_t h, std::size_t w,
                    const std::vector<int>& table) {
  const std::size_t bh = (h + 7) / 8, bw = (w + 7) / 8;
  for (std::size_t by = 0; by < bh; ++by) {
    for (std::size_t bx = 0; bx < bw; ++bx) {
      Block block{};
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t sy = std::min(by * 8 + y, h - 1), sx = std::min(bx * 8 + x, w - 1);
          block[y * 8 + x] = plane[sy * w + sx] - 128.0;
        }
      Block coef = forward_dct(block);
      for (std::size_t i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / table[i]) * table[i];
      const Block rec = inverse_dct(coef);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t py = by * 8 + y, px = bx * 8 + x;
          if (py < h && px < w) plane[py * w + px] = rec[y * 8 + x] + 128.0;
        }
    }
  }
}

}  // namespace

std::vector<int> jpeg_quant_table(int quality, bool chroma) {
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChrominance : kLuminance;
  std::vector<int> table(64);
  for (std::size_t i = 0; i < 64; ++i) table[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return table;
}

Image jpeg_compress(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must be in [1,100]");
  const std::size_t h = img.height(), w = img.width(), C = img.channels();
  const std::size_t n = h * w;
  const auto luma = jpeg_quant_table(quality, false);
  Image out = img;
  if (C == 3) {
    const auto chroma = jpeg_quant_table(quality, true);
    std::vector<double> Y(n), Cb(n), Cr(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double r = img[p * 3] * 255.0, g = img[p * 3 + 1] * 255.0, b = img[p * 3 + 2] * 255.0;
      Y[p] = 0.299 * r + 0.587 * g + 0.114 * b;
      Cb[p] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
      Cr[p] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    }
    quantize_plane(Y, h, w, luma);
    quantize_plane(Cb, h, w, chroma);
    quantize_plane(Cr, h, w, chroma);
    for (std::size_t p = 0; p < n; ++p) {
      const double cb = Cb[p] - 128.0, cr = Cr[p] - 128.0;
      out[p * 3] = static_cast<float>((Y[p] + 1.402 * cr) / 255.0);
      out[p * 3 + 1] = static_cast<float>((Y[p] - 0.344136 * cb - 0.714136 * cr) / 255.0);
      out[p * 3 + 2] = static_cast<float>((Y[p] + 1.772 * cb) / 255.0);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> plane(n);
      for (std::size_t p = 0; p < n; ++p) plane[p] = img[p * C + c] * 255.0;
      quantize_plane(plane, h, w, luma);
      for (std::size_t p = 0; p < n; ++p) out[p * C + c] = static_cast<float>(plane[p] / 255.0);
    }
  }
  clamp_unit(out);
  return out;
}

Image color_depth_reduce(const Image& img, int bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bits per channel must be in [1,8]");
  const float levels = static_cast<float>((1 << bits) - 1);
  Image out = img;
  for (float& v : out.data) {
    const float q = std::floor(std::clamp(v, 0.0f, 1.0f) * levels + 0.5f);
    v = q / levels;
  }
  return out;
}

std::vector<NamedTransform> standard_transforms() {
  return {
      {"rotate_15", [](const Image& i) { return rotate(i, 15.0); }},
      {"upscale_2x", [](const Image& i) { return upscale(i, 2.0); }},
      {"crop_12.5", [](const Image& i) { return center_crop(i, 0.125); }},
      {"jpeg_90", [](const Image& i) { return jpeg_compress(i, 90); }},
      {"jpeg_75", [](const Image& i) { return jpeg_compress(i, 75); }},
      {"jpeg_50", [](const Image& i) { return jpeg_compress(i, 50); }},
      {"depth_4bit", [](const Image& i) { return color_depth_reduce(i, 4); }},
      {"depth_3bit", [](const Image& i) { return color_depth_reduce(i, 3); }},
  };
}

double recovery_rate(const nn::ModelKey& model, std::span<const Image> stego_images,
                     std::span<const std::vector<nn::ClassId>> reference_classes,
                     const Transform& transform) {
  if (stego_images.size() != reference_classes.size())
    throw ShapeError("recovery_rate: one reference class list per image required");
  if (stego_images.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < stego_images.size(); ++i) {
    Image t = transform(stego_images[i]);
    if (t.height() != model.arch.height || t.width() != model.arch.width)
      t = resize_bilinear(t, model.arch.height, model.arch.width);
    const auto& ref = reference_classes[i];
    if (nn::top_k_classes(model, t, ref.size()) == ref) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(stego_images.size());
}

}  // namespace advstego::tamper
