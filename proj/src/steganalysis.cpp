#include "advstego/steganalysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "advstego/data.hpp"

namespace advstego::steganalysis {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::size_t kWindow = 8;

double channel_ssim(const Image& a, const Image& b, std::size_t c) {
  const std::size_t H = a.height(), W = a.width();
  const std::size_t wh = std::min(kWindow, H), ww = std::min(kWindow, W);
  const double n = static_cast<double>(wh * ww);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t y0 = 0; y0 + wh <= H; ++y0) {
    for (std::size_t x0 = 0; x0 + ww <= W; ++x0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t y = y0; y < y0 + wh; ++y)
        for (std::size_t x = x0; x < x0 + ww; ++x) {
          const double va = a.at(y, x, c), vb = b.at(y, x, c);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma;
      const double vb = sbb / n - mb * mb;
      const double cov = sab / n - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

std::vector<std::uint8_t> channel_bytes(const Image& img, std::size_t c) {
  std::vector<std::uint8_t> out(img.height() * img.width());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = data::to_byte(img[p * img.channels() + c]);
  return out;
}

struct PairCounts {
  double X = 0, Y = 0, gamma = 0, P = 0;

  void add(int u, int v) {
    P += 1;
    if ((v % 2 == 0 && u < v) || (v % 2 == 1 && u > v)) X += 1;
    if ((v % 2 == 0 && u > v) || (v % 2 == 1 && u < v)) Y += 1;
    if ((u >> 1) == (v >> 1)) gamma += 1;
  }
};

double spa_estimate(const PairCounts& n) {
  if (n.P == 0 || n.gamma == n.P) return 0.0;
  // (gamma/2) p^2 + (2X - P) p + (Y - X) = 0, smaller root.
  const double a = n.gamma / 2.0, b = 2.0 * n.X - n.P, c = n.Y - n.X;
  double p;
  if (a == 0.0) {
    if (b == 0.0) return 0.0;
    p = -c / b;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return 0.0;
    const double s = std::sqrt(disc);
    p = std::min((-b + s) / (2.0 * a), (-b - s) / (2.0 * a));
  }
  return std::isfinite(p) ? std::max(0.0, p) : 0.0;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.size() == 0) throw ShapeError("ssim of empty images");
  double sum = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) sum += channel_ssim(a, b, c);
  return sum / static_cast<double>(a.channels());
}

double ssim_loss_percent(const Image& a, const Image& b) { return (1.0 - ssim(a, b)) * 100.0; }

double spa_score(const Image& img) {
  if (img.size() == 0) return 0.0;
  const std::size_t H = img.height(), W = img.width();
  double sum = 0.0;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const auto px = channel_bytes(img, c);
    PairCounts horizontal, vertical;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x + 1 < W; ++x) horizontal.add(px[y * W + x], px[y * W + x + 1]);
    for (std::size_t y = 0; y + 1 < H; ++y)
      for (std::size_t x = 0; x < W; ++x) vertical.add(px[y * W + x], px[(y + 1) * W + x]);
    sum += spa_estimate(horizontal) + spa_estimate(vertical);
  }
  return sum / static_cast<double>(2 * img.channels());
}

double lsb_chi_square_score(const Image& img) {
  std::array<double, 256> hist{};
  for (float v : img.data) hist[data::to_byte(v)] += 1.0;
  double chi2 = 0.0;
  int categories = 0;
  for (std::size_t i = 0; i < 128; ++i) {
    const double expected = (hist[2 * i] + hist[2 * i + 1]) / 2.0;
    if (expected <= 0.0) continue;
    const double d = hist[2 * i] - expected;
    chi2 += d * d / expected;
    ++categories;
  }
  if (categories < 2) return 0.0;
  const boost::math::chi_squared dist(categories - 1);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

double auc_roc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size())
    throw std::invalid_argument("auc_roc: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto npos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) throw std::invalid_argument("auc_roc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace advstego::steganalysis
