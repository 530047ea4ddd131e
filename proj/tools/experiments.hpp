#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "advstego/attack.hpp"

namespace advstego::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAttack = 4;
inline constexpr int kExitExtract = 5;

/// Carries the process exit code for errors raised by the command layer.
class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::string dataset = "synth";
  std::string covers;  // PNG directory; empty uses held-out synthetic covers
  std::string key;     // key file; empty trains a desk model on the dataset
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t epochs = 10;
  std::size_t family_size = 20;
  std::size_t messages = 100;
  std::size_t message_bits = 64;
  std::size_t images = 100;
  std::size_t trials = 50;
  std::size_t max_k = 7;
  std::vector<double> gammas{0.5, 1.0, 2.0, 4.0};
  attack::AttackConfig attack;
};

/// Runs rq1..rq5 and writes CSV, .dat and .gp files into `out`.
void run_experiment(const std::string& name, const ExperimentOptions& options,
                    const std::filesystem::path& out);

/// Directory of class subdirectories (PNG) or a CIFAR-10 binary file.
data::LabeledDataset load_dataset(const std::string& source);

}  // namespace advstego::cli
