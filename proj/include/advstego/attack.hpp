#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "advstego/codec.hpp"
#include "advstego/neuralkey.hpp"
#include "advstego/random.hpp"
#include "advstego/tensor.hpp"

// Targeted L2 PGD and its sorted top-k extension (SATA).
namespace advstego::attack {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class NoiseMode {
  RestartOnly,  // random-sphere start once per restart
  EveryStep,    // literal reading: noise before every gradient step
};

struct AttackConfig {
  double epsilon = 0.5;       // max L2 norm of stego - cover
  double epsilon_step = 0.1;  // L2 length of each gradient step
  std::size_t iterations = 40;
  std::size_t restarts = 10;
  std::size_t k = 1;  // classes forced per image
  double gamma = 1.0;
  NoiseMode noise_mode = NoiseMode::RestartOnly;
  float clamp_min = 0.0f;
  float clamp_max = 1.0f;
};

/// Throws ConfigError when a field is outside its domain (k is checked
/// against num_classes).
void validate(const AttackConfig& config, std::size_t num_classes);

struct AttackOutcome {
  std::vector<Image> stego_images;  // float images, each within epsilon of its cover
  std::vector<Image> covers;        // the cover each stego image was crafted from
  double best_rate = 0.0;
  std::vector<bool> per_chunk_success;
  std::size_t restarts_used = 0;
};

/// w_i = (1 - (i-1)/k)^gamma for ranks i = 1..chunk_length.
std::vector<float> build_weighted_logits(std::size_t chunk_length, std::size_t k, double gamma);

/// Uniform sample from the L2 ball of radius epsilon.
Tensor random_sphere(const std::vector<std::size_t>& shape, double epsilon, Rng& rng);

/// Scales v onto the L2 ball of radius epsilon when it lies outside.
Tensor project_l2(const Tensor& v, double epsilon);

/// One weighted PGD step: optional random start, normalized combined
/// gradient step of length epsilon_step, projection onto the epsilon ball
/// around the cover, clamp to pixel bounds. A zero gradient skips the step.
Image compute_adv(const Image& adv, std::span<const float> weights, const Image& cover,
                  std::span<const codec::Digit> target_chunk, const AttackConfig& config,
                  const nn::ModelKey& model, Rng& rng, bool first_iteration);

/// 1 iff the model's ordered top-|chunk| classes equal the chunk.
bool chunk_success(const nn::ModelKey& model, const Image& image, std::span<const codec::Digit> chunk);

/// Mean chunk success; images and chunks must pair up one to one.
double compute_success(const nn::ModelKey& model, std::span<const Image> stego_images,
                       const codec::ChunkPlan& plan);

/// Runs up to `restarts` random restarts of `iterations` weighted PGD steps
/// per chunk. Each chunk keeps the first restart that succeeds (success is
/// judged on the 8-bit quantized image). Chunk streams are derived from
/// (seed, restart, chunk) so results do not depend on evaluation order.
AttackOutcome sata_embed(const nn::ModelKey& model, std::span<const Image> cover_pool,
                         const codec::ChunkPlan& plan, const AttackConfig& config,
                         std::uint64_t seed);

struct GammaSearchResult {
  double gamma = 0.0;
  double success_rate = 0.0;
  std::vector<double> rates;  // one per candidate, in input order
};

/// Mean single-chunk success over `trials` random chunks of k distinct digits
/// for each gamma; argmax with ties to the smaller gamma.
GammaSearchResult grid_search_gamma(const nn::ModelKey& model, std::span<const Image> covers,
                                    std::size_t k, const std::vector<double>& gamma_candidates,
                                    const AttackConfig& config, std::size_t trials,
                                    std::uint64_t seed);

/// Random chunk of `length` pairwise distinct classes drawn from [0, N).
codec::Chunk random_distinct_chunk(std::size_t length, std::size_t num_classes, Rng& rng);

}  // namespace advstego::attack
