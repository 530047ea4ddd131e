#include "advstego/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advstego/data.hpp"

namespace advstego::attack {

namespace {

constexpr std::uint64_t kPickStream = 0x91c4;
constexpr std::uint64_t kChunkStream = 0xc4a2;
constexpr std::uint64_t kTrialStream = 0x7e1a;

}  // namespace

void validate(const AttackConfig& c, std::size_t num_classes) {
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(c.epsilon_step > 0.0)) throw ConfigError("epsilon_step must be > 0");
  if (c.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (c.restarts < 1) throw ConfigError("restarts must be >= 1");
  if (!(c.gamma > 0.0)) throw ConfigError("gamma must be > 0");
  if (c.k < 1 || c.k > num_classes)
    throw ConfigError("k must satisfy 1 <= k <= N (k=" + std::to_string(c.k) +
                      ", N=" + std::to_string(num_classes) + ")");
  if (!(c.clamp_min < c.clamp_max)) throw ConfigError("clamp bounds are empty");
}

std::vector<float> build_weighted_logits(std::size_t chunk_length, std::size_t k, double gamma) {
  if (chunk_length > k) throw ConfigError("chunk longer than k");
  std::vector<float> w(chunk_length);
  for (std::size_t i = 0; i < chunk_length; ++i) {
    const double base = 1.0 - static_cast<double>(i) / static_cast<double>(k);
    w[i] = static_cast<float>(std::pow(base, gamma));
  }
  return w;
}

Tensor random_sphere(const std::vector<std::size_t>& shape, double epsilon, Rng& rng) {
  Tensor out(shape);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> dir(out.size());
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& d : dir) {
      d = gauss(rng);
      norm2 += d * d;
    }
  } while (norm2 == 0.0);
  const double radius =
      epsilon * std::pow(unit(rng), 1.0 / static_cast<double>(std::max<std::size_t>(1, out.size())));
  const double scale = radius / std::sqrt(norm2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(dir[i] * scale);
  return out;
}

Tensor project_l2(const Tensor& v, double epsilon) {
  const double norm = l2_norm(v.values());
  if (norm <= epsilon) return v;
  Tensor out = v;
  const double scale = epsilon / norm;
  for (float& x : out.data) x = static_cast<float>(x * scale);
  return out;
}

Image compute_adv(const Image& adv, std::span<const float> weights, const Image& cover,
                  std::span<const codec::Digit> target_chunk, const AttackConfig& config,
                  const nn::ModelKey& model, Rng& rng, bool first_iteration) {
  require_same_shape(adv, cover, "compute_adv");
  if (weights.size() != target_chunk.size())
    throw ShapeError("compute_adv: one weight per target class required");

  Image x = adv;
  if (config.noise_mode == NoiseMode::EveryStep || first_iteration) {
    const Tensor noise = random_sphere(x.shape, config.epsilon, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += noise[i];
  }

  // Descend the weighted cross-entropy of the target classes.
  const Tensor grad = nn::weighted_loss_gradient(model, x, target_chunk, weights);
  const double norm = l2_norm(grad.values());
  if (norm > 0.0 && std::isfinite(norm)) {
    const double step = config.epsilon_step / norm;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= static_cast<float>(step * grad[i]);
  }

  Tensor perturbation(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) perturbation[i] = x[i] - cover[i];
  perturbation = project_l2(perturbation, config.epsilon);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::clamp(cover[i] + perturbation[i], config.clamp_min, config.clamp_max);
  return x;
}

bool chunk_success(const nn::ModelKey& model, const Image& image,
                   std::span<const codec::Digit> chunk) {
  if (chunk.empty()) return true;
  const auto top = nn::top_k_classes(model, image, chunk.size());
  return std::equal(top.begin(), top.end(), chunk.begin(), chunk.end());
}

double compute_success(const nn::ModelKey& model, std::span<const Image> stego_images,
                       const codec::ChunkPlan& plan) {
  if (stego_images.size() != plan.chunks.size())
    throw ShapeError("compute_success: " + std::to_string(stego_images.size()) + " images for " +
                     std::to_string(plan.chunks.size()) + " chunks");
  if (plan.chunks.empty()) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < plan.chunks.size(); ++i)
    if (chunk_success(model, stego_images[i], plan.chunks[i])) ++ok;
  return static_cast<double>(ok) / static_cast<double>(plan.chunks.size());
}

namespace {

// Cover index per chunk: without replacement while the pool suffices.
std::vector<std::size_t> random_pick(std::size_t pool, std::size_t count, Rng& rng) {
  std::vector<std::size_t> picks(count);
  if (pool >= count) {
    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, pool - 1);
      std::swap(order[i], order[d(rng)]);
      picks[i] = order[i];
    }
  } else {
    std::uniform_int_distribution<std::size_t> d(0, pool - 1);
    for (auto& p : picks) p = d(rng);
  }
  return picks;
}

}  // namespace

AttackOutcome sata_embed(const nn::ModelKey& model, std::span<const Image> cover_pool,
                         const codec::ChunkPlan& plan, const AttackConfig& config,
                         std::uint64_t seed) {
  const std::size_t N = model.num_classes();
  validate(config, N);
  if (cover_pool.empty()) throw ConfigError("cover pool is empty");
  if (plan.base != N)
    throw ConfigError("chunk plan base " + std::to_string(plan.base) + " does not match model N=" +
                      std::to_string(N));
  for (const auto& chunk : plan.chunks) {
    if (chunk.empty() || chunk.size() > config.k)
      throw ConfigError("chunk length must be in 1..k");
    for (codec::Digit d : chunk)
      if (d >= N) throw ConfigError("target class " + std::to_string(d) + " >= N");
  }

  const std::size_t chunks = plan.chunks.size();
  AttackOutcome out;
  out.stego_images.resize(chunks);
  out.covers.resize(chunks);
  out.per_chunk_success.assign(chunks, false);
  std::size_t successes = 0;

  for (std::size_t r = 0; r < config.restarts && successes < chunks; ++r) {
    out.restarts_used = r + 1;
    Rng pick_rng = make_rng(seed, {kPickStream, r});
    const auto picks = random_pick(cover_pool.size(), chunks, pick_rng);
    for (std::size_t c = 0; c < chunks; ++c) {
      if (out.per_chunk_success[c]) continue;
      const auto& chunk = plan.chunks[c];
      const auto weights = build_weighted_logits(chunk.size(), config.k, config.gamma);
      const Image& cover = cover_pool[picks[c]];
      Rng rng = make_rng(seed, {kChunkStream, r, c});
      Image adv = cover;
      bool ok = false;
      for (std::size_t it = 0; it < config.iterations && !ok; ++it) {
        adv = compute_adv(adv, weights, cover, chunk, config, model, rng, it == 0);
        ok = chunk_success(model, data::quantize_image(adv), chunk);
      }
      out.stego_images[c] = std::move(adv);
      out.covers[c] = cover;
      if (ok) {
        out.per_chunk_success[c] = true;
        ++successes;
      }
    }
  }
  out.best_rate = chunks == 0 ? 1.0 : static_cast<double>(successes) / static_cast<double>(chunks);
  return out;
}

codec::Chunk random_distinct_chunk(std::size_t length, std::size_t num_classes, Rng& rng) {
  if (length > num_classes) throw ConfigError("chunk longer than class count");
  std::vector<codec::Digit> classes(num_classes);
  std::iota(classes.begin(), classes.end(), codec::Digit{0});
  for (std::size_t i = 0; i < length; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, num_classes - 1);
    std::swap(classes[i], classes[d(rng)]);
  }
  classes.resize(length);
  return classes;
}

GammaSearchResult grid_search_gamma(const nn::ModelKey& model, std::span<const Image> covers,
                                    std::size_t k, const std::vector<double>& gamma_candidates,
                                    const AttackConfig& config, std::size_t trials,
                                    std::uint64_t seed) {
  if (gamma_candidates.empty()) throw ConfigError("no gamma candidates");
  if (trials == 0) throw ConfigError("need at least one trial");
  const std::size_t N = model.num_classes();

  // Same chunks and streams for every gamma.
  std::vector<codec::ChunkPlan> plans;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, {kTrialStream, t});
    codec::ChunkPlan p;
    p.k = k;
    p.base = static_cast<codec::Digit>(N);
    p.chunks.push_back(random_distinct_chunk(k, N, rng));
    plans.push_back(std::move(p));
  }

  GammaSearchResult result;
  result.success_rate = -1.0;
  for (double gamma : gamma_candidates) {
    AttackConfig cfg = config;
    cfg.k = k;
    cfg.gamma = gamma;
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t)
      total += sata_embed(model, covers, plans[t], cfg, derive_seed(seed, {t})).best_rate;
    const double rate = total / static_cast<double>(trials);
    result.rates.push_back(rate);
    if (rate > result.success_rate || (rate == result.success_rate && gamma < result.gamma)) {
      result.success_rate = rate;
      result.gamma = gamma;
    }
  }
  return result;
}

}  // namespace advstego::attack
