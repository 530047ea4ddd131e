#include "advstego/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace advstego::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string image_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stego_%06zu.png", index);
  return buf;
}

void validate_manifest(const Manifest& m, std::size_t image_count) {
  if (m.version != kManifestVersion)
    throw ExtractError("unsupported manifest version " + std::to_string(m.version));
  if (m.n < 2) throw ExtractError("manifest base n must be >= 2");
  if (m.k < 1 || m.k > m.n) throw ExtractError("manifest k must satisfy 1 <= k <= n");
  if (m.chunk_lengths.size() != image_count)
    throw ExtractError("manifest lists " + std::to_string(m.chunk_lengths.size()) +
                       " chunks but there are " + std::to_string(image_count) + " images");
  std::size_t digits = 0;
  for (std::size_t len : m.chunk_lengths) {
    if (len < 1 || len > m.k) throw ExtractError("chunk length outside 1..k in manifest");
    digits += len;
  }
  const std::size_t expected = codec::required_images(m.bit_length, m.n);
  if (digits != expected)
    throw ExtractError("manifest chunk lengths sum to " + std::to_string(digits) + ", expected " +
                       std::to_string(expected) + " digits for " + std::to_string(m.bit_length) +
                       " bits");
}

std::string manifest_to_json(const Manifest& m) {
  json j{{"version", m.version},
         {"n", m.n},
         {"k", m.k},
         {"bit_length", m.bit_length},
         {"chunk_lengths", m.chunk_lengths},
         {"images", m.images}};
  if (m.key_fingerprint) j["key_fingerprint"] = *m.key_fingerprint;
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Manifest m;
    m.version = j.at("version").get<int>();
    m.n = j.at("n").get<codec::Digit>();
    m.k = j.at("k").get<std::size_t>();
    m.bit_length = j.at("bit_length").get<std::size_t>();
    m.chunk_lengths = j.at("chunk_lengths").get<std::vector<std::size_t>>();
    m.images = j.at("images").get<std::vector<std::string>>();
    if (j.contains("key_fingerprint")) m.key_fingerprint = j["key_fingerprint"].get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw ExtractError(std::string("malformed manifest: ") + e.what());
  }
}

StegoSequence embed_message(const codec::BitMessage& bits, const nn::ModelKey& model,
                            std::span<const Image> cover_pool,
                            const attack::AttackConfig& config, std::uint64_t seed,
                            attack::AttackOutcome* outcome) {
  const auto N = static_cast<codec::Digit>(model.num_classes());
  attack::validate(config, N);

  const codec::DigitMessage digits = codec::encode_base_n(bits, N);
  const codec::ChunkPlan plan = codec::split_into_chunks(digits, config.k);

  StegoSequence seq;
  seq.manifest.n = N;
  seq.manifest.k = config.k;
  seq.manifest.bit_length = bits.length();
  seq.manifest.chunk_lengths = plan.chunk_lengths();
  seq.manifest.key_fingerprint = model.fingerprint;
  if (plan.chunks.empty()) {
    if (outcome) *outcome = attack::AttackOutcome{{}, {}, 1.0, {}, 0};
    return seq;
  }

  attack::AttackOutcome result = attack::sata_embed(model, cover_pool, plan, config, seed);
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < result.per_chunk_success.size(); ++i)
    if (!result.per_chunk_success[i]) failed.push_back(i);
  if (!failed.empty()) {
    std::ostringstream msg;
    msg << "embedding failed for " << failed.size() << " of " << plan.chunks.size()
        << " chunks after " << result.restarts_used << " restarts (chunks:";
    for (std::size_t f : failed) msg << ' ' << f;
    msg << ")";
    if (outcome) *outcome = std::move(result);
    throw EmbedError(msg.str(), std::move(failed));
  }

  for (std::size_t i = 0; i < result.stego_images.size(); ++i) {
    seq.images.push_back(quantize_image(result.stego_images[i]));
    seq.manifest.images.push_back(image_filename(i));
  }
  if (outcome) *outcome = std::move(result);
  return seq;
}

codec::BitMessage extract_message(const StegoSequence& stego, const nn::ModelKey& model) {
  const Manifest& m = stego.manifest;
  if (m.n != model.num_classes())
    throw ExtractError("manifest N=" + std::to_string(m.n) + " does not match model N=" +
                       std::to_string(model.num_classes()));
  validate_manifest(m, stego.images.size());

  codec::DigitMessage digits;
  digits.base = m.n;
  digits.bit_length = m.bit_length;
  for (std::size_t i = 0; i < stego.images.size(); ++i) {
    const auto top = nn::top_k_classes(model, stego.images[i], m.chunk_lengths[i]);
    digits.digits.insert(digits.digits.end(), top.begin(), top.end());
  }
  try {
    return codec::decode_base_n(digits);
  } catch (const codec::CodecError& e) {
    throw ExtractError(std::string("digit overflow: ") + e.what());
  }
}

double decoding_rate(const StegoSequence& stego, const nn::ModelKey& crafted_with,
                     const nn::ModelKey& decoder) {
  if (crafted_with.num_classes() != decoder.num_classes() ||
      crafted_with.arch.input_shape() != decoder.arch.input_shape())
    throw ShapeError("decoding_rate: models differ in input dims or class count");
  if (stego.images.empty()) return 1.0;
  if (stego.manifest.chunk_lengths.size() != stego.images.size())
    throw ExtractError("decoding_rate: manifest and images disagree");
  std::size_t same = 0;
  for (std::size_t i = 0; i < stego.images.size(); ++i) {
    const std::size_t len = stego.manifest.chunk_lengths[i];
    if (nn::top_k_classes(crafted_with, stego.images[i], len) ==
        nn::top_k_classes(decoder, stego.images[i], len))
      ++same;
  }
  return static_cast<double>(same) / static_cast<double>(stego.images.size());
}

void save_stego(const StegoSequence& stego, const fs::path& dir) {
  fs::create_directories(dir);
  Manifest m = stego.manifest;
  m.images.clear();
  for (std::size_t i = 0; i < stego.images.size(); ++i) {
    m.images.push_back(image_filename(i));
    data::save_png(stego.images[i], dir / m.images.back());
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw data::DataError("cannot write manifest in " + dir.string());
  out << manifest_to_json(m);
}

StegoSequence load_stego(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ExtractError("missing manifest: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  StegoSequence seq;
  seq.manifest = manifest_from_json(buf.str());
  for (const std::string& name : seq.manifest.images) {
    if (name.find('/') != std::string::npos || name.find("..") != std::string::npos)
      throw ExtractError("manifest image name escapes the directory: " + name);
    try {
      seq.images.push_back(data::load_png(dir / name));
    } catch (const data::DataError& e) {
      throw ExtractError(e.what());
    }
  }
  return seq;
}

}  // namespace advstego::pipeline
