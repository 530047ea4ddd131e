#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "advstego/codec.hpp"
#include "advstego/data.hpp"
#include "advstego/digest.hpp"
#include "advstego/neuralkey.hpp"
#include "advstego/pipeline.hpp"
#include "advstego/steganalysis.hpp"
#include "experiments.hpp"

using namespace advstego;
using namespace advstego::cli;
namespace fs = std::filesystem;

namespace {

struct KeygenArgs {
  std::string arch = "desk";
  std::uint64_t seed = 0;
  std::string dataset = "synth";
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::size_t epochs = 10;
  std::string out;
};

struct EmbedArgs {
  std::string key, message, covers, out;
  attack::AttackConfig attack;
  std::uint64_t seed = 0;
};

struct ExtractArgs {
  std::string key, stego, out;
};

// "desk" or "family:<width multiplier>:<depth>".
nn::ArchSpec parse_arch(const std::string& preset, std::size_t n, const std::vector<std::size_t>& shape) {
  if (preset == "desk") return nn::desk_arch(n, shape[0], shape[1], shape[2]);
  if (preset.rfind("family:", 0) == 0) {
    std::istringstream in(preset.substr(7));
    double width = 0.0;
    std::size_t depth = 0;
    char sep = 0;
    if (in >> width >> sep >> depth && sep == ':' && in.peek() == EOF)
      return nn::family_arch(n, width, depth, shape[0], shape[1], shape[2]);
  }
  throw CliError(kExitConfig, "unknown architecture preset " + preset + " (desk | family:<width>:<depth>)");
}

nn::ModelKey load_key_or_fail(const std::string& path) {
  try {
    return nn::load_key(path);
  } catch (const nn::KeyFileError& e) {
    throw CliError(kExitConfig, std::string("cannot load key: ") + e.what());
  }
}

codec::BitMessage read_message(const std::string& source) {
  if (fs::is_regular_file(source)) {
    std::ifstream in(source, std::ios::binary);
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return codec::BitMessage::from_bytes(bytes);
  }
  std::string hex = source;
  if (hex.rfind("0x", 0) == 0) hex = hex.substr(2);
  try {
    return codec::BitMessage::from_hex(hex);
  } catch (const codec::CodecError&) {
    throw CliError(kExitConfig, "--message is neither a file nor a hex string: " + source);
  }
}

int keygen(const KeygenArgs& a) {
  data::LabeledDataset ds;
  if (a.dataset == "synth") {
    data::SynthOptions so;
    so.num_classes = a.classes;
    so.per_class = a.per_class;
    so.seed = a.seed;
    ds = data::synth_dataset(so);
  } else {
    ds = load_dataset(a.dataset);
  }
  nn::ModelKey model = nn::build_model(parse_arch(a.arch, ds.num_classes, ds.images.front().shape), a.seed);
  nn::TrainingConfig tc;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  const auto report = nn::train(model, ds, tc);
  nn::save_key(model, a.out);
  std::cout << "fingerprint " << model.fingerprint << "\n"
            << "classes " << model.num_classes() << "\n"
            << "train_accuracy " << report.train_accuracy << "\n";
  return kExitOk;
}

int embed(const EmbedArgs& a) {
  const nn::ModelKey model = load_key_or_fail(a.key);
  attack::validate(a.attack, model.num_classes());
  const codec::BitMessage message = read_message(a.message);
  if (!fs::is_directory(a.covers)) throw CliError(kExitData, "covers directory not found: " + a.covers);
  const auto covers = data::load_png_images(a.covers);
  if (covers.empty()) throw CliError(kExitData, "no PNG covers in " + a.covers);
  if (covers.front().shape != model.arch.input_shape())
    throw CliError(kExitData, "cover size " + shape_string(covers.front().shape) + " does not match the key input " +
                                  shape_string(model.arch.input_shape()));

  attack::AttackOutcome outcome;
  pipeline::StegoSequence stego;
  try {
    stego = pipeline::embed_message(message, model, covers, a.attack, a.seed, &outcome);
  } catch (const pipeline::EmbedError& e) {
    for (std::size_t i = 0; i < outcome.per_chunk_success.size(); ++i)
      std::cout << "chunk " << i << (outcome.per_chunk_success[i] ? " ok" : " FAILED") << "\n";
    throw CliError(kExitAttack, e.what());
  }
  pipeline::save_stego(stego, a.out);
  double loss = 0.0;
  for (std::size_t i = 0; i < stego.images.size(); ++i) {
    std::cout << "chunk " << i << " ok classes";
    for (std::size_t c : nn::top_k_classes(model, stego.images[i], stego.manifest.chunk_lengths[i])) std::cout << ' ' << c;
    std::cout << "\n";
    loss += steganalysis::ssim_loss_percent(outcome.covers[i], stego.images[i]);
  }
  std::cout << "bits " << message.length() << "\n"
            << "images " << stego.images.size() << "\n"
            << "mean_ssim_loss_percent " << (stego.images.empty() ? 0.0 : loss / stego.images.size()) << "\n";
  return kExitOk;
}

int extract(const ExtractArgs& a) {
  const nn::ModelKey model = load_key_or_fail(a.key);
  const auto stego = pipeline::load_stego(a.stego);
  const codec::BitMessage bits = pipeline::extract_message(stego, model);
  const auto bytes = bits.to_bytes();
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw CliError(kExitData, "cannot write " + a.out);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::cout << "bits " << bits.length() << "\n"
            << "message " << bits.to_hex() << "\n"
            << "sha256 " << sha256_hex(bytes) << "\n";
  return kExitOk;
}

void add_attack_options(CLI::App* cmd, attack::AttackConfig& c) {
  cmd->add_option("--k", c.k, "Classes forced per image")->capture_default_str();
  cmd->add_option("--gamma", c.gamma, "Rank weight exponent")->capture_default_str();
  cmd->add_option("--epsilon", c.epsilon, "L2 perturbation budget")->capture_default_str();
  cmd->add_option("--epsilon-step", c.epsilon_step, "L2 length of a PGD step")->capture_default_str();
  cmd->add_option("--restarts", c.restarts, "Random restarts per chunk")->capture_default_str();
  cmd->add_option("--iters", c.iterations, "PGD steps per restart")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hide bit messages in images as targeted adversarial examples against a secret classifier."};
  app.require_subcommand(1);

  KeygenArgs kg;
  auto* keygen_cmd = app.add_subcommand("keygen", "Train a classifier key and write it to a key file");
  keygen_cmd->add_option("--arch", kg.arch, "desk | family:<width>:<depth>")->capture_default_str();
  keygen_cmd->add_option("--seed", kg.seed)->capture_default_str();
  keygen_cmd->add_option("--dataset", kg.dataset, "synth, a PNG class directory or a CIFAR-10 binary file")
      ->capture_default_str();
  keygen_cmd->add_option("--classes", kg.classes, "Classes of the synthetic dataset")->capture_default_str();
  keygen_cmd->add_option("--per-class", kg.per_class, "Images per class of the synthetic dataset")
      ->capture_default_str();
  keygen_cmd->add_option("--epochs", kg.epochs)->capture_default_str();
  keygen_cmd->add_option("--out", kg.out, "Key file")->required();

  EmbedArgs em;
  auto* embed_cmd = app.add_subcommand("embed", "Embed a message into stego PNGs plus manifest.json");
  embed_cmd->add_option("--key", em.key)->required();
  embed_cmd->add_option("--message", em.message, "Message file or hex string")->required();
  embed_cmd->add_option("--covers", em.covers, "Directory of cover PNGs")->required();
  add_attack_options(embed_cmd, em.attack);
  embed_cmd->add_option("--seed", em.seed)->capture_default_str();
  embed_cmd->add_option("--out", em.out, "Output directory")->required();

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Recover a message from a stego directory");
  extract_cmd->add_option("--key", ex.key)->required();
  extract_cmd->add_option("--stego", ex.stego, "Directory with manifest.json")->required();
  extract_cmd->add_option("--out", ex.out, "Message file")->required();

  ExperimentOptions eo;
  std::string which, report_dir;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an evaluation and write CSV and plot data");
  exp_cmd->add_option("name", which, "rq1 | rq2 | rq3 | rq4 | rq5")
      ->required()
      ->check(CLI::IsMember({"rq1", "rq2", "rq3", "rq4", "rq5"}));
  exp_cmd->add_option("--out", report_dir, "Report directory")->required();
  exp_cmd->add_option("--seed", eo.seed)->capture_default_str();
  exp_cmd->add_option("--dataset", eo.dataset)->capture_default_str();
  exp_cmd->add_option("--covers", eo.covers, "Cover PNG directory (default: held-out synthetic covers)");
  exp_cmd->add_option("--key", eo.key, "Key file (default: train a desk model)");
  exp_cmd->add_option("--classes", eo.classes)->capture_default_str();
  exp_cmd->add_option("--per-class", eo.per_class)->capture_default_str();
  exp_cmd->add_option("--epochs", eo.epochs)->capture_default_str();
  exp_cmd->add_option("--family-size", eo.family_size)->capture_default_str();
  exp_cmd->add_option("--messages", eo.messages, "Messages for the density simulation")->capture_default_str();
  exp_cmd->add_option("--message-bits", eo.message_bits)->capture_default_str();
  exp_cmd->add_option("--images", eo.images, "Stego images per set")->capture_default_str();
  exp_cmd->add_option("--trials", eo.trials, "Attack trials per k and gamma")->capture_default_str();
  exp_cmd->add_option("--max-k", eo.max_k)->capture_default_str();
  exp_cmd->add_option("--gammas", eo.gammas)->delimiter(',')->capture_default_str();
  add_attack_options(exp_cmd, eo.attack);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*keygen_cmd) return keygen(kg);
    if (*embed_cmd) return embed(em);
    if (*extract_cmd) return extract(ex);
    run_experiment(which, eo, report_dir);
    return kExitOk;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const pipeline::EmbedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAttack;
  } catch (const pipeline::ExtractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitExtract;
  } catch (const data::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nn::KeyFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {  // attack::ConfigError and other bad settings
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
