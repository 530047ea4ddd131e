#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "advstego/attack.hpp"
#include "advstego/data.hpp"
#include "support/fixtures.hpp"

using namespace advstego;
using namespace advstego::attack;

namespace {

Image random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img = make_image(h, w, c);
  for (float& v : img.data) v = u(rng);
  return img;
}

// All weights zero; the last bias fixes the class ranking for every input.
nn::ModelKey constant_model(const std::vector<float>& last_bias) {
  nn::ModelKey m = nn::build_model(nn::desk_arch(last_bias.size(), 8, 8, 3), 1);
  for (auto& t : m.weights) std::fill(t.data.begin(), t.data.end(), 0.0f);
  m.weights.back().data = last_bias;
  return m;
}

// Straightforward L2 PGD step in double precision.
Image reference_pgd_step(const Image& adv, const Image& cover, nn::ClassId target,
                         const AttackConfig& cfg, const nn::ModelKey& model, Rng& rng, bool first) {
  Image x = adv;
  if (first) {
    const Tensor noise = random_sphere(x.shape, cfg.epsilon, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += noise[i];
  }
  const Tensor g = nn::loss_gradient_wrt_input(model, x, target);
  double n2 = 0.0;
  for (float v : g.data) n2 += static_cast<double>(v) * v;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - cfg.epsilon_step * g[i] / std::sqrt(n2);
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (y[i] - cover[i]) * (y[i] - cover[i]);
  const double s = std::sqrt(d2) > cfg.epsilon ? cfg.epsilon / std::sqrt(d2) : 1.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(std::clamp(cover[i] + (y[i] - cover[i]) * s, 0.0, 1.0));
  return x;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("config validation") {
  AttackConfig c;
  CHECK_NOTHROW(validate(c, 10));
  c.k = 11;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
  c.k = 0;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
  c = AttackConfig{};
  c.epsilon = 0.0;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
  c = AttackConfig{};
  c.gamma = -1.0;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
  c = AttackConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
  c = AttackConfig{};
  c.restarts = 0;
  CHECK_THROWS_AS(validate(c, 10), ConfigError);
}

TEST_CASE("weight law") {
  CHECK(build_weighted_logits(1, 1, 3.0) == std::vector<float>{1.0f});
  const auto w3 = build_weighted_logits(3, 3, 1.0);
  CHECK(w3[0] == 1.0f);
  CHECK(w3[1] == doctest::Approx(2.0 / 3.0));
  CHECK(w3[2] == doctest::Approx(1.0 / 3.0));
  const auto w4 = build_weighted_logits(2, 4, 2.0);
  CHECK(w4[0] == 1.0f);
  CHECK(w4[1] == doctest::Approx(0.5625));
  CHECK_THROWS_AS(build_weighted_logits(3, 2, 1.0), ConfigError);
}

TEST_CASE("random_sphere samples the ball uniformly") {
  Rng rng = make_rng(31);
  const std::size_t d = 16;
  const double eps = 0.5;
  std::vector<double> mean(d, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Tensor s = random_sphere({4, 4, 1}, eps, rng);
    CHECK(l2_norm(s.values()) <= eps + 1e-6);
    for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
  }
  // Per-coordinate variance of the uniform ball: eps^2 / (d + 2).
  const double sigma = eps / std::sqrt(static_cast<double>(d + 2)) / std::sqrt(static_cast<double>(n));
  for (double m : mean) CHECK(std::abs(m / n) < 3.0 * sigma * 1.5);

  Rng a = make_rng(5), b = make_rng(5);
  CHECK(random_sphere({8, 8, 3}, 0.5, a) == random_sphere({8, 8, 3}, 0.5, b));
}

TEST_CASE("project_l2") {
  Tensor v({2}, 0.0f);
  v.data = {0.6f, 0.8f};
  const Tensor p = project_l2(v, 0.5);
  CHECK(l2_norm(p.values()) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(p[0] / p[1] == doctest::Approx(0.75));
  v.data = {0.18f, 0.24f};
  CHECK(project_l2(v, 0.5) == v);
  const Tensor zero({5}, 0.0f);
  CHECK(project_l2(zero, 0.5) == zero);
}

TEST_CASE("compute_adv stays in the ball and the pixel range") {
  Rng rng = make_rng(32);
  const auto& model = fixtures::desk_model(10);
  AttackConfig cfg;
  cfg.epsilon_step = 0.4;
  for (int t = 0; t < 10; ++t) {
    const Image cover = random_image(32, 32, 3, rng);
    Image adv = cover;
    const std::vector<codec::Digit> chunk{static_cast<codec::Digit>(t), static_cast<codec::Digit>((t + 3) % 10)};
    const auto w = build_weighted_logits(2, 2, 1.0);
    for (int it = 0; it < 5; ++it) {
      adv = compute_adv(adv, w, cover, chunk, cfg, model, rng, it == 0);
      CHECK(l2_distance(adv, cover) <= cfg.epsilon + 1e-5);
      CHECK(std::all_of(adv.data.begin(), adv.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    }
  }
  const std::vector<codec::Digit> one{1};
  const std::vector<float> two_w{1.0f, 0.5f};
  CHECK_THROWS_AS(compute_adv(make_image(32, 32, 3), two_w, make_image(32, 32, 3), one, cfg, model, rng, true),
                  ShapeError);
  CHECK_THROWS_AS(compute_adv(make_image(32, 32, 3), build_weighted_logits(1, 1, 1.0), make_image(16, 16, 3),
                              one, cfg, model, rng, true),
                  ShapeError);
}

TEST_CASE("k = 1 follows a reference PGD trajectory") {
  const auto& model = fixtures::desk_model(10);
  const Image& cover = fixtures::cover_pool(10)[3];
  AttackConfig cfg;
  Rng r1 = make_rng(33), r2 = make_rng(33);
  const std::vector<codec::Digit> chunk{7};
  const auto w = build_weighted_logits(1, 1, cfg.gamma);
  Image a = cover, b = cover;
  for (int it = 0; it < 10; ++it) {
    a = compute_adv(a, w, cover, chunk, cfg, model, r1, it == 0);
    b = reference_pgd_step(b, cover, 7, cfg, model, r2, it == 0);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, static_cast<double>(std::abs(a[i] - b[i])));
    CHECK(diff < 1e-5);
    b = a;  // keep float drift from compounding
  }
}

TEST_CASE("zero gradient skips the directional step") {
  const auto model = constant_model({0.0f, 0.0f, 0.0f});
  Rng img_rng = make_rng(37), rng = make_rng(34), ref = make_rng(34);
  const Image cover = random_image(8, 8, 3, img_rng);
  AttackConfig cfg;
  const std::vector<codec::Digit> chunk{1};
  const auto w = build_weighted_logits(1, 1, 1.0);
  const Image out = compute_adv(cover, w, cover, chunk, cfg, model, rng, true);
  const Tensor noise = random_sphere(cover.shape, cfg.epsilon, ref);
  Tensor delta(cover.shape);
  for (std::size_t i = 0; i < cover.size(); ++i) delta[i] = (cover[i] + noise[i]) - cover[i];
  delta = project_l2(delta, cfg.epsilon);
  Image expected = cover;
  for (std::size_t i = 0; i < cover.size(); ++i)
    expected[i] = std::clamp(cover[i] + delta[i], 0.0f, 1.0f);
  CHECK(out == expected);
  // without noise nothing moves
  CHECK(compute_adv(cover, w, cover, chunk, cfg, model, rng, false) == cover);
}

TEST_CASE("compute_success scores ordered top-k matches") {
  const auto model = constant_model({3.0f, 2.0f, 1.0f, 0.0f});  // ranking 0,1,2,3
  const Image img = make_image(8, 8, 3, 0.5f);
  CHECK(chunk_success(model, img, std::vector<codec::Digit>{0, 1}));
  CHECK_FALSE(chunk_success(model, img, std::vector<codec::Digit>{1, 0}));
  codec::ChunkPlan plan;
  plan.k = 2;
  plan.base = 4;
  plan.chunks = {{0, 1}, {1, 0}};
  const std::vector<Image> imgs{img, img};
  CHECK(compute_success(model, imgs, plan) == 0.5);
  const std::vector<Image> extra{img, img, img};
  CHECK_THROWS_AS(compute_success(model, extra, plan), ShapeError);
}

TEST_CASE("sata_embed contract") {
  const auto& model = fixtures::desk_model(10);
  const auto& pool = fixtures::cover_pool(10);
  AttackConfig cfg;
  cfg.k = 2;
  codec::ChunkPlan plan;
  plan.k = 2;
  plan.base = 10;
  plan.chunks = {{4, 1}, {7}, {0, 9}, {2, 5}};

  const auto out = sata_embed(model, pool, plan, cfg, 77);
  REQUIRE(out.stego_images.size() == 4);
  std::size_t ok = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(l2_distance(out.stego_images[c], out.covers[c]) <= cfg.epsilon + 1e-5);
    const auto& px = out.stego_images[c].data;
    CHECK(std::all_of(px.begin(), px.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    CHECK(std::find(pool.begin(), pool.end(), out.covers[c]) != pool.end());
    if (out.per_chunk_success[c]) {
      ++ok;
      CHECK(chunk_success(model, data::quantize_image(out.stego_images[c]), plan.chunks[c]));
    }
  }
  CHECK(out.best_rate == static_cast<double>(ok) / 4.0);
  CHECK(out.restarts_used >= 1);
  CHECK(out.restarts_used <= cfg.restarts);

  const auto again = sata_embed(model, pool, plan, cfg, 77);
  CHECK(again.stego_images == out.stego_images);
  CHECK(again.per_chunk_success == out.per_chunk_success);

  // more restarts never lower the rate
  AttackConfig one = cfg;
  one.restarts = 1;
  CHECK(sata_embed(model, pool, plan, one, 77).best_rate <= out.best_rate);

  AttackConfig big = cfg;
  big.k = 11;
  CHECK_THROWS_AS(sata_embed(model, pool, plan, big, 1), ConfigError);
  CHECK_THROWS_AS(sata_embed(model, std::span<const Image>{}, plan, cfg, 1), ConfigError);
  codec::ChunkPlan wrong_base = plan;
  wrong_base.base = 4;
  CHECK_THROWS_AS(sata_embed(model, pool, wrong_base, cfg, 1), ConfigError);
}

TEST_CASE("single digits embed reliably at k = 1") {
  const auto& model = fixtures::desk_model(10);
  const auto& pool = fixtures::cover_pool(10);
  Rng rng = make_rng(35);
  std::uniform_int_distribution<codec::Digit> digit(0, 9);
  int ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    codec::ChunkPlan plan;
    plan.base = 10;
    plan.chunks = {{digit(rng)}};
    ok += sata_embed(model, pool, plan, AttackConfig{}, 1000 + t).best_rate == 1.0;
  }
  CHECK(ok >= 95);
}

TEST_CASE("gamma grid search") {
  const auto& model = fixtures::desk_model(10);
  const auto& pool = fixtures::cover_pool(10);
  AttackConfig cfg;
  cfg.restarts = 2;
  const auto single = grid_search_gamma(model, pool, 2, {1.5}, cfg, 4, 3);
  CHECK(single.gamma == 1.5);
  CHECK(single.rates.size() == 1);

  const auto k1 = grid_search_gamma(model, pool, 1, {0.5, 1.0, 2.0}, cfg, 4, 3);
  CHECK(k1.rates[0] == k1.rates[1]);
  CHECK(k1.rates[1] == k1.rates[2]);
  CHECK(k1.gamma == 0.5);

  const auto k2 = grid_search_gamma(model, pool, 2, {0.5, 1.0, 2.0}, cfg, 10, 4);
  CHECK(k2.success_rate > 0.0);
  CHECK(k2.success_rate == *std::max_element(k2.rates.begin(), k2.rates.end()));
  CHECK_THROWS_AS(grid_search_gamma(model, pool, 2, {}, cfg, 4, 3), ConfigError);
}

TEST_CASE("random_distinct_chunk") {
  Rng rng = make_rng(36);
  for (int i = 0; i < 200; ++i) {
    const auto c = random_distinct_chunk(4, 10, rng);
    CHECK(c.size() == 4);
    auto s = c;
    std::sort(s.begin(), s.end());
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(s.back() < 10);
  }
  CHECK_THROWS_AS(random_distinct_chunk(5, 4, rng), ConfigError);
}

}
