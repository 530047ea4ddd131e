#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "advstego/pipeline.hpp"
#include "advstego/steganalysis.hpp"
#include "support/fixtures.hpp"
#include "support/lsb_oracle.hpp"

using namespace advstego;
using namespace advstego::steganalysis;

namespace {

Image random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img = make_image(h, w, c);
  for (float& v : img.data) v = u(rng);
  return img;
}

// Two-pass SSIM: window means first, then centred second moments.
double oracle_ssim(const Image& a, const Image& b) {
  const std::size_t H = a.height(), W = a.width(), C = a.channels();
  const std::size_t wh = std::min<std::size_t>(8, H), ww = std::min<std::size_t>(8, W);
  const double c1 = 1e-4, c2 = 9e-4, n = static_cast<double>(wh * ww);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double channel = 0.0;
    std::size_t count = 0;
    for (std::size_t y0 = 0; y0 + wh <= H; ++y0)
      for (std::size_t x0 = 0; x0 + ww <= W; ++x0) {
        double ma = 0, mb = 0;
        for (std::size_t y = y0; y < y0 + wh; ++y)
          for (std::size_t x = x0; x < x0 + ww; ++x) {
            ma += a.at(y, x, c);
            mb += b.at(y, x, c);
          }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (std::size_t y = y0; y < y0 + wh; ++y)
          for (std::size_t x = x0; x < x0 + ww; ++x) {
            const double da = a.at(y, x, c) - ma, db = b.at(y, x, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= n;
        vb /= n;
        cov /= n;
        channel += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += channel / static_cast<double>(count);
  }
  return total / static_cast<double>(C);
}

// Pairwise AUC: P(positive > negative) + P(tie) / 2.
double oracle_auc(const std::vector<double>& s, const bool* pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

Image bytes_image(std::size_t h, std::size_t w, const std::vector<int>& bytes) {
  Image img = make_image(h, w, 1);
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = data::from_byte(static_cast<std::uint8_t>(bytes[i]));
  return img;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

}  // namespace

TEST_SUITE("steganalysis") {

TEST_CASE("SSIM basics") {
  const Image a = random_image(32, 32, 3, 71);
  const Image b = random_image(32, 32, 3, 72);
  CHECK(ssim(a, a) == 1.0);
  CHECK(ssim_loss_percent(a, a) == 0.0);
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) < 0.1);

  Image x = make_image(16, 16, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>((i * 7 + i / 16) % 2);
  Image inv = x;
  for (float& v : inv.data) v = 1.0f - v;
  CHECK(ssim_loss_percent(x, inv) > 100.0);

  CHECK_THROWS_AS(ssim(a, make_image(32, 31, 3)), ShapeError);
}

TEST_CASE("SSIM matches a two-pass oracle") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image a = random_image(20, 17, 3, 80 + s);
    Image b = a;
    Rng rng = make_rng(90 + s);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    for (float& v : b.data) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    CHECK(ssim(a, b) == doctest::Approx(oracle_ssim(a, b)).epsilon(1e-9));
  }
  const Image small_a = random_image(5, 6, 1, 95), small_b = random_image(5, 6, 1, 96);
  CHECK(ssim(small_a, small_b) == doctest::Approx(oracle_ssim(small_a, small_b)).epsilon(1e-9));
  const Image& nat = fixtures::natural_images()[0];
  const Image half = fixtures::lsb_replace(nat, 0.5, 3);
  CHECK(ssim(nat, half) == doctest::Approx(oracle_ssim(nat, half)).epsilon(1e-9));
}

TEST_CASE("stego images keep SSIM loss small") {
  const auto& model = fixtures::desk_model(10);
  const auto& covers = fixtures::cover_pool(10);
  attack::AttackOutcome outcome;
  const auto stego = pipeline::embed_message(codec::BitMessage::from_hex("5eed"), model, covers,
                                             attack::AttackConfig{}, 21, &outcome);
  REQUIRE(!stego.images.empty());
  REQUIRE(outcome.covers.size() == stego.images.size());
  for (std::size_t i = 0; i < stego.images.size(); ++i)
    CHECK(ssim_loss_percent(outcome.covers[i], stego.images[i]) < 15.0);
}

TEST_CASE("SPA hand-counted pairs") {
  // (10,13): v odd, u < v -> Y. (13,12): v even, u > v -> Y, same pair class.
  // X = 0, Y = 2, gamma = 1, P = 2: 0.5 p^2 - 2 p + 2 = 0 has the double root 2.
  // No vertical pairs, so the two directions average to 1.
  CHECK(spa_score(bytes_image(1, 3, {10, 13, 12})) == doctest::Approx(1.0));
  CHECK(spa_score(bytes_image(3, 1, {10, 13, 12})) == doctest::Approx(1.0));
  // (10,11): v odd, u < v -> Y, gamma. (11,10): v even, u > v -> Y, gamma.
  // 1 p^2 - 2 p + 2 has a negative discriminant -> 0.
  CHECK(spa_score(bytes_image(1, 3, {10, 11, 10})) == 0.0);
  // (20,25) -> Y; (25,30): v even, u < v -> X. gamma = 0 and 2X - P = 0 -> 0.
  CHECK(spa_score(bytes_image(1, 3, {20, 25, 30})) == 0.0);
}

TEST_CASE("SPA on clean and partially replaced natural images") {
  CHECK(spa_score(make_image(16, 16, 3, 0.4f)) == 0.0);
  CHECK(spa_score(make_image(0, 0, 3)) == 0.0);
  for (const Image& nat : fixtures::natural_images()) {
    const double clean = spa_score(nat);
    MESSAGE("clean SPA " << clean);
    CHECK(clean >= 0.0);
    CHECK(clean < 0.1);
    for (double rate : {0.25, 0.5}) {
      std::vector<double> est;
      for (std::uint64_t s = 0; s < 5; ++s) est.push_back(spa_score(fixtures::lsb_replace(nat, rate, 100 + s)));
      MESSAGE("rate " << rate << " SPA median " << median(est));
      CHECK(std::abs(median(est) - rate) < 0.1);
    }
  }
}

TEST_CASE("SPA at full LSB replacement") {
  for (const Image& nat : fixtures::natural_images())
    for (std::uint64_t s = 0; s < 8; ++s) {
      const double full = spa_score(fixtures::lsb_replace(nat, 1.0, 300 + s));
      MESSAGE("rate 1.0 SPA " << full);
      CHECK(full > 0.8);
    }
}

TEST_CASE("chi-square attack") {
  for (const Image& nat : fixtures::natural_images())
    CHECK(lsb_chi_square_score(fixtures::lsb_replace(nat, 1.0, 8)) > 0.9);
  std::vector<double> clean, full;
  for (std::size_t i = 0; i < 20; ++i) {
    const Image& cover = fixtures::cover_pool(10)[i * 5];
    clean.push_back(lsb_chi_square_score(cover));
    full.push_back(lsb_chi_square_score(fixtures::lsb_replace(cover, 1.0, 200 + i)));
  }
  CHECK(median(clean) < 0.5);
  CHECK(*std::min_element(full.begin(), full.end()) > 0.9);

  // every value even: each pair differs maximally from equalised
  Image even = make_image(64, 64, 1);
  for (std::size_t i = 0; i < even.size(); ++i) even[i] = data::from_byte(static_cast<std::uint8_t>(2 * (i % 100)));
  const double e = lsb_chi_square_score(even);
  CHECK(std::isfinite(e));
  CHECK(e < 1e-6);
  CHECK(lsb_chi_square_score(make_image(8, 8, 3, 0.5f)) == 0.0);
}

TEST_CASE("AUC") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const bool sep_pos[] = {false, false, true, true};
  CHECK(auc_roc(sep, sep_pos) == 1.0);
  const bool rev_pos[] = {true, true, false, false};
  CHECK(auc_roc(sep, rev_pos) == 0.0);
  const std::vector<double> ties(6, 0.3);
  const bool tie_pos[] = {true, false, true, false, true, false};
  CHECK(auc_roc(ties, tie_pos) == 0.5);

  Rng rng = make_rng(73);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = 1000;
  std::vector<double> scores(n);
  auto labels = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::round(u(rng) * 50.0) / 50.0;  // plenty of ties
    labels[i] = coin(rng);
  }
  const std::span<const bool> lab(labels.get(), n);
  const double a = auc_roc(scores, lab);
  CHECK(std::abs(a - 0.5) < 0.05);
  CHECK(a == doctest::Approx(oracle_auc(scores, labels.get())).epsilon(1e-12));

  std::vector<double> shifted(n);
  std::transform(scores.begin(), scores.end(), shifted.begin(), [](double s) { return std::exp(3.0 * s) - 7.0; });
  CHECK(auc_roc(shifted, lab) == a);

  const bool one_class[] = {true, true, true, true};
  CHECK_THROWS_AS(auc_roc(sep, one_class), std::invalid_argument);
  CHECK_THROWS_AS(auc_roc(sep, std::span<const bool>(sep_pos, 3)), std::invalid_argument);
}

}
