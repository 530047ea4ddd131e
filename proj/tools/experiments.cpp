#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "advstego/codec.hpp"
#include "advstego/data.hpp"
#include "advstego/neuralkey.hpp"
#include "advstego/pipeline.hpp"
#include "advstego/steganalysis.hpp"
#include "advstego/tamper.hpp"

namespace advstego::cli {

namespace fs = std::filesystem;

data::LabeledDataset load_dataset(const std::string& source) {
  if (!fs::exists(source)) throw CliError(kExitData, "dataset not found: " + source);
  data::LabeledDataset ds =
      fs::is_directory(source) ? data::load_png_dir(source) : data::load_cifar10_binary(fs::path(source));
  if (ds.num_classes < 2) throw CliError(kExitData, "dataset needs at least 2 classes: " + source);
  data::validate(ds);
  return ds;
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(8) << v;
  return s.str();
}

class Table {
 public:
  Table(const fs::path& path, const std::string& header) : out_(path) {
    if (!out_) throw CliError(kExitData, "cannot write " + path.string());
    out_ << header << '\n';
  }
  template <typename... Ts>
  void row(const Ts&... values) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cell(values)), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string cell(T v) { return std::to_string(v); }

  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliError(kExitData, "cannot write " + path.string());
  out << text;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

codec::BitMessage random_message(std::size_t bits, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  codec::BitMessage m;
  for (std::size_t i = 0; i < bits; ++i) m.bits.push_back(coin(rng) ? 1 : 0);
  return m;
}

struct Setup {
  data::LabeledDataset train;
  std::vector<Image> covers;
  nn::ModelKey key;
};

Setup prepare(const ExperimentOptions& o) {
  Setup s;
  if (o.dataset == "synth") {
    data::SynthOptions so;
    so.num_classes = o.classes;
    so.per_class = o.per_class;
    so.seed = o.seed;
    s.train = data::synth_dataset(so);
    if (o.covers.empty()) {
      so.per_class = 10;
      so.split = 1;
      s.covers = data::synth_dataset(so).images;
    }
  } else {
    s.train = load_dataset(o.dataset);
    if (o.covers.empty()) throw CliError(kExitConfig, "--covers is required with a dataset path");
  }
  if (!o.covers.empty()) {
    if (!fs::is_directory(o.covers)) throw CliError(kExitData, "covers directory not found: " + o.covers);
    s.covers = data::load_png_images(o.covers);
  }
  if (s.covers.empty()) throw CliError(kExitData, "no cover images");
  const auto shape = s.train.images.front().shape;
  if (s.covers.front().shape != shape) throw CliError(kExitData, "covers do not match the dataset image size");

  if (!o.key.empty()) {
    s.key = nn::load_key(o.key);
    if (s.key.arch.input_shape() != shape || s.key.num_classes() != s.train.num_classes)
      throw CliError(kExitData, "key does not match the dataset");
  } else {
    s.key = nn::build_model(nn::desk_arch(s.train.num_classes, shape[0], shape[1], shape[2]), o.seed);
    nn::TrainingConfig tc;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    nn::train(s.key, s.train, tc);
  }
  std::cout << "key " << s.key.fingerprint << " train_accuracy " << num(nn::accuracy(s.key, s.train))
            << "\n";
  return s;
}

// Random messages split into chunks until `images` chunks exist; only the
// chunks the attack got right are kept.
struct StegoSet {
  pipeline::StegoSequence stego;
  std::vector<Image> covers;
  std::vector<std::vector<nn::ClassId>> targets;
  std::size_t attempted = 0;
};

StegoSet embed_random(const nn::ModelKey& model, const std::vector<Image>& covers, std::size_t images,
                      std::size_t message_bits, const attack::AttackConfig& config, std::uint64_t seed) {
  const auto N = static_cast<codec::Digit>(model.num_classes());
  attack::validate(config, N);
  Rng rng = make_rng(seed, {0x3e55a6e});
  codec::ChunkPlan plan;
  plan.k = config.k;
  plan.base = N;
  while (plan.chunks.size() < images) {
    const auto part = codec::split_into_chunks(codec::encode_base_n(random_message(message_bits, rng), N), config.k);
    plan.chunks.insert(plan.chunks.end(), part.chunks.begin(), part.chunks.end());
  }
  plan.chunks.resize(images);
  const auto outcome = attack::sata_embed(model, covers, plan, config, derive_seed(seed, {0x5a7a}));
  StegoSet set;
  set.attempted = images;
  set.stego.manifest.n = N;
  set.stego.manifest.k = config.k;
  for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
    if (!outcome.per_chunk_success[i]) continue;
    set.stego.images.push_back(data::quantize_image(outcome.stego_images[i]));
    set.stego.manifest.chunk_lengths.push_back(plan.chunks[i].size());
    set.stego.manifest.images.push_back(pipeline::image_filename(set.stego.images.size() - 1));
    set.covers.push_back(outcome.covers[i]);
    set.targets.emplace_back(plan.chunks[i].begin(), plan.chunks[i].end());
  }
  return set;
}

struct FamilyMember {
  nn::ModelKey model;
  double width = 1.0;
  std::size_t depth = 1;
  std::uint64_t seed = 0;
};

std::vector<FamilyMember> build_family(const Setup& s, const ExperimentOptions& o) {
  if (o.family_size == 0) throw CliError(kExitConfig, "--family-size must be positive");
  const std::vector<nn::FamilyGridPoint> grid{{1.0, 1}, {1.0, 2}, {2.0, 1}, {2.0, 2}};
  const std::size_t per_point = (o.family_size + grid.size() - 1) / grid.size();
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < per_point; ++i) seeds.push_back(derive_seed(o.seed, {0xfa3, i}) >> 16);
  nn::TrainingConfig tc;
  tc.epochs = o.epochs;
  const auto models = nn::generate_model_family(grid, seeds, s.train.num_classes,
                                                s.train.images.front().shape, nn::FamilyTraining{&s.train, tc});
  std::vector<FamilyMember> family;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& point = grid[i / seeds.size()];
    family.push_back({models[i], point.width_multiplier, point.depth, seeds[i % seeds.size()]});
  }
  // Spread a partial family over the grid points instead of filling the first ones.
  std::vector<FamilyMember> picked;
  for (std::size_t j = 0; picked.size() < o.family_size; ++j)
    picked.push_back(family[(j % grid.size()) * seeds.size() + j / grid.size()]);
  return picked;
}

std::string gnuplot(const std::string& output, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::string& plot) {
  std::ostringstream g;
  g << "set terminal pngcairo size 800,500\n"
    << "set output '" << output << "'\n"
    << "set title '" << title << "'\n"
    << "set xlabel '" << xlabel << "'\n"
    << "set ylabel '" << ylabel << "'\n"
    << "set grid\n"
    << plot << "\n";
  return g.str();
}

void rq1(const ExperimentOptions& o, const fs::path& out) {
  const Setup s = prepare(o);
  // message1: "hello" as the integer 29234652 (25 bits); message2: 64 random
  // alphanumeric characters.
  codec::BitMessage message1;
  for (int i = 24; i >= 0; --i) message1.bits.push_back((29234652u >> i) & 1u);
  const std::string alnum = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  Rng rng = make_rng(o.seed, {0x4d32});
  std::uniform_int_distribution<std::size_t> pick(0, alnum.size() - 1);
  std::vector<std::uint8_t> text;
  for (int i = 0; i < 64; ++i) text.push_back(static_cast<std::uint8_t>(alnum[pick(rng)]));
  const codec::BitMessage message2 = codec::BitMessage::from_bytes(text);

  Table table(out / "rq1_ssim.csv", "image_set,perturbation,images,ssim_loss_mean,ssim_loss_std");
  std::ofstream dat(out / "rq1_ssim.dat");
  dat << "# set index adv_ssim_loss jpeg75_ssim_loss\n";
  const std::pair<const char*, const codec::BitMessage*> sets[] = {{"message1", &message1}, {"message2", &message2}};
  int set_index = 0;
  for (const auto& [name, message] : sets) {
    attack::AttackOutcome outcome;
    const auto stego = pipeline::embed_message(*message, s.key, s.covers, o.attack,
                                               derive_seed(o.seed, {0x4d31, static_cast<std::uint64_t>(set_index)}),
                                               &outcome);
    std::vector<double> adv, jpeg;
    for (std::size_t i = 0; i < stego.images.size(); ++i) {
      const Image& cover = outcome.covers[i];
      adv.push_back(steganalysis::ssim_loss_percent(cover, stego.images[i]));
      jpeg.push_back(steganalysis::ssim_loss_percent(cover, data::quantize_image(tamper::jpeg_compress(cover, 75))));
      dat << set_index << ' ' << i << ' ' << num(adv.back()) << ' ' << num(jpeg.back()) << '\n';
    }
    dat << "\n\n";
    table.row(name, "adv_emb", adv.size(), mean(adv), stddev(adv));
    table.row(name, "jpeg75", jpeg.size(), mean(jpeg), stddev(jpeg));
    std::cout << name << ": " << adv.size() << " images, SSIM loss " << num(mean(adv)) << "% (JPEG-75 "
              << num(mean(jpeg)) << "%)\n";
    ++set_index;
  }
  write_text(out / "rq1_ssim.gp",
             gnuplot("rq1_ssim.png", "SSIM loss per stego image", "image", "SSIM loss (%)",
                     "plot 'rq1_ssim.dat' index 0 using 2:3 with points title 'message1 adv', \\\n"
                     "     'rq1_ssim.dat' index 0 using 2:4 with points title 'message1 jpeg75', \\\n"
                     "     'rq1_ssim.dat' index 1 using 2:3 with points title 'message2 adv', \\\n"
                     "     'rq1_ssim.dat' index 1 using 2:4 with points title 'message2 jpeg75'"));
}

void rq2(const ExperimentOptions& o, const fs::path& out) {
  const Setup s = prepare(o);
  const StegoSet set = embed_random(s.key, s.covers, o.images, o.message_bits, o.attack, derive_seed(o.seed, {0x2}));
  if (set.stego.images.empty()) throw CliError(kExitAttack, "no stego image could be crafted");
  const std::size_t clean_count = std::min(o.images, s.covers.size());

  std::vector<double> spa, chi;
  std::vector<std::uint8_t> label;
  std::ofstream dat(out / "rq2_scores.dat");
  dat << "# stego spa chi_square\n";
  auto score = [&](const Image& img, bool stego) {
    spa.push_back(steganalysis::spa_score(img));
    chi.push_back(steganalysis::lsb_chi_square_score(img));
    label.push_back(stego ? 1 : 0);
    dat << (stego ? 1 : 0) << ' ' << num(spa.back()) << ' ' << num(chi.back()) << '\n';
  };
  for (std::size_t i = 0; i < clean_count; ++i) score(s.covers[i], false);
  for (const Image& img : set.stego.images) score(img, true);

  const std::unique_ptr<bool[]> positive(new bool[label.size()]);
  for (std::size_t i = 0; i < label.size(); ++i) positive[i] = label[i] != 0;
  const std::span<const bool> pos(positive.get(), label.size());
  Table table(out / "rq2_auc.csv", "detector,auc,stego_images,clean_images");
  const double spa_auc = steganalysis::auc_roc(spa, pos);
  const double chi_auc = steganalysis::auc_roc(chi, pos);
  table.row("spa", spa_auc, set.stego.images.size(), clean_count);
  table.row("chi_square", chi_auc, set.stego.images.size(), clean_count);
  std::cout << "AUC spa " << num(spa_auc) << " chi_square " << num(chi_auc) << " (" << set.stego.images.size()
            << " stego, " << clean_count << " clean)\n";
  write_text(out / "rq2_scores.gp",
             gnuplot("rq2_scores.png", "Detector scores", "SPA estimate", "chi-square p-value",
                     "plot 'rq2_scores.dat' using ($1==0?$2:1/0):3 with points title 'clean', \\\n"
                     "     'rq2_scores.dat' using ($1==1?$2:1/0):3 with points title 'stego'"));
}

void rq3(const ExperimentOptions& o, const fs::path& out) {
  const Setup s = prepare(o);
  const StegoSet set = embed_random(s.key, s.covers, o.images, o.message_bits, o.attack, derive_seed(o.seed, {0x3}));
  if (set.stego.images.empty()) throw CliError(kExitAttack, "no stego image could be crafted");
  const auto family = build_family(s, o);

  Table table(out / "rq3_decoding.csv", "model,width_multiplier,depth,seed,train_accuracy,decoding_rate");
  std::vector<double> rates;
  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto& m = family[i];
    const double rate = pipeline::decoding_rate(set.stego, s.key, m.model);
    rates.push_back(rate);
    table.row(i, m.width, m.depth, m.seed, nn::accuracy(m.model, s.train), rate);
  }
  Table summary(out / "rq3_summary.csv", "models,stego_images,min,median,max,key_decoding_rate");
  summary.row(rates.size(), set.stego.images.size(), *std::min_element(rates.begin(), rates.end()),
              median(rates), *std::max_element(rates.begin(), rates.end()),
              pipeline::decoding_rate(set.stego, s.key, s.key));
  std::cout << "decoding rate over " << rates.size() << " models: median " << num(median(rates)) << " max "
            << num(*std::max_element(rates.begin(), rates.end())) << "\n";

  std::sort(rates.begin(), rates.end());
  std::ofstream dat(out / "rq3_decoding.dat");
  dat << "# rank decoding_rate\n";
  for (std::size_t i = 0; i < rates.size(); ++i) dat << i << ' ' << num(rates[i]) << '\n';
  write_text(out / "rq3_decoding.gp",
             gnuplot("rq3_decoding.png", "Decoding rate by alternative models", "model (sorted)",
                     "decoding rate", "plot 'rq3_decoding.dat' using 1:2 with linespoints title 'family'"));
}

void rq4(const ExperimentOptions& o, const fs::path& out) {
  const Setup s = prepare(o);
  auto family = build_family(s, o);
  std::vector<std::pair<std::string, const nn::ModelKey*>> models{{"key", &s.key}};
  for (std::size_t i = 0; i < family.size(); ++i) models.emplace_back("family_" + std::to_string(i), &family[i].model);

  const auto transforms = tamper::standard_transforms();
  std::vector<std::vector<double>> rates(transforms.size());
  Table table(out / "rq4_recovery.csv", "model,transform,images,embed_success,recovery_rate");
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& [name, model] = models[m];
    const StegoSet set =
        embed_random(*model, s.covers, o.images, o.message_bits, o.attack, derive_seed(o.seed, {0x4, m}));
    const double embedded = static_cast<double>(set.stego.images.size()) / static_cast<double>(set.attempted);
    for (std::size_t t = 0; t < transforms.size() && !set.stego.images.empty(); ++t) {
      const double r = tamper::recovery_rate(*model, set.stego.images, set.targets, transforms[t].apply);
      // summary: models that embed at least half of their targets
      if (embedded >= 0.5) rates[t].push_back(r);
      table.row(name, transforms[t].name, set.stego.images.size(), embedded, r);
    }
  }
  Table summary(out / "rq4_summary.csv", "transform,models,min,median,max");
  std::ostringstream plot;
  plot << "plot ";
  for (std::size_t t = 0; t < transforms.size(); ++t) {
    auto sorted = rates[t];
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.empty() ? 0.0 : sorted.front(), hi = sorted.empty() ? 0.0 : sorted.back();
    summary.row(transforms[t].name, sorted.size(), lo, median(sorted), hi);
    std::cout << transforms[t].name << ": best " << num(hi) << " median " << num(median(sorted)) << "\n";
    const std::string dat_name = "rq4_" + transforms[t].name + ".dat";
    std::ofstream dat(out / dat_name);
    dat << "# rank recovery_rate\n";
    for (std::size_t i = 0; i < sorted.size(); ++i) dat << i << ' ' << num(sorted[i]) << '\n';
    plot << (t ? ", \\\n     " : "") << "'" << dat_name << "' using 1:2 with linespoints title '"
         << transforms[t].name << "'";
  }
  write_text(out / "rq4_recovery.gp",
             gnuplot("rq4_recovery.png", "Recovery rate after tampering", "model (sorted)", "recovery rate",
                     plot.str()));
}

void rq5(const ExperimentOptions& o, const fs::path& out) {
  const Setup s = prepare(o);
  const auto N = static_cast<codec::Digit>(s.key.num_classes());
  const std::size_t pixels = s.covers.front().size();
  const std::size_t max_k = std::min<std::size_t>(o.max_k, N);
  if (max_k == 0) throw CliError(kExitConfig, "--max-k must be positive");

  Table density(out / "rq5_density.csv",
                "k,messages,message_bits,mean_images,mean_digits,bits_per_image,bits_per_pixel,raw_bits_per_pixel");
  std::ofstream density_dat(out / "rq5_density.dat");
  density_dat << "# k mean_images bits_per_pixel\n";
  for (std::size_t k = 1; k <= max_k; ++k) {
    const auto d = codec::simulate_density(N, k, o.messages, o.message_bits, pixels, derive_seed(o.seed, {0x5d, k}));
    density.row(k, o.messages, o.message_bits, d.mean_images, d.mean_digits, d.bits_per_image, d.bits_per_pixel,
                d.raw_bits_per_pixel);
    density_dat << k << ' ' << num(d.mean_images) << ' ' << num(d.bits_per_pixel) << '\n';
  }

  Table gamma_table(out / "rq5_gamma.csv", "k,gamma,trials,success_rate");
  Table success(out / "rq5_success.csv", "k,best_gamma,trials,success_rate");
  std::ofstream success_dat(out / "rq5_success.dat");
  success_dat << "# k success_rate best_gamma\n";
  for (std::size_t k = 1; k <= max_k; ++k) {
    attack::AttackConfig cfg = o.attack;
    cfg.k = k;
    const auto g = attack::grid_search_gamma(s.key, s.covers, k, o.gammas, cfg, o.trials, derive_seed(o.seed, {0x5e, k}));
    for (std::size_t i = 0; i < o.gammas.size(); ++i) gamma_table.row(k, o.gammas[i], o.trials, g.rates[i]);
    success.row(k, g.gamma, o.trials, g.success_rate);
    success_dat << k << ' ' << num(g.success_rate) << ' ' << num(g.gamma) << '\n';
    std::cout << "k=" << k << " success " << num(g.success_rate) << " (gamma " << num(g.gamma) << ")\n";
  }
  write_text(out / "rq5_density.gp",
             gnuplot("rq5_density.png", "Images per message", "k", "mean images",
                     "plot 'rq5_density.dat' using 1:2 with linespoints title 'images per message'"));
  write_text(out / "rq5_success.gp",
             gnuplot("rq5_success.png", "Embedding success rate", "k", "success rate",
                     "plot 'rq5_success.dat' using 1:2 with linespoints title 'best gamma'"));
}

}  // namespace

void run_experiment(const std::string& name, const ExperimentOptions& options, const fs::path& out) {
  fs::create_directories(out);
  if (name == "rq1") return rq1(options, out);
  if (name == "rq2") return rq2(options, out);
  if (name == "rq3") return rq3(options, out);
  if (name == "rq4") return rq4(options, out);
  if (name == "rq5") return rq5(options, out);
  throw CliError(kExitConfig, "unknown experiment " + name);
}

}  // namespace advstego::cli
