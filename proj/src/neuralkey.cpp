#include "advstego/neuralkey.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

#include "advstego/digest.hpp"
#include "advstego/random.hpp"

namespace advstego::nn {

using json = nlohmann::json;

namespace {

struct LayerGeom {
  LayerKind kind;
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
  std::size_t kernel = 0, stride = 1, pad = 0;
  int param = -1;  // index of the weight tensor; bias follows it

  std::size_t in_size() const { return in_c * in_h * in_w; }
  std::size_t out_size() const { return out_c * out_h * out_w; }
};

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& name) {
  for (auto k : {LayerKind::Conv, LayerKind::Relu, LayerKind::MaxPool, LayerKind::Flatten,
                 LayerKind::Dense})
    if (name == kind_name(k)) return k;
  throw ArchError("unknown layer type '" + name + "'");
}

std::vector<LayerGeom> make_plan(const ArchSpec& arch) {
  if (arch.height == 0 || arch.width == 0 || arch.channels == 0)
    throw ArchError("input dims must be positive");
  if (arch.layers.empty()) throw ArchError("architecture has no layers");

  std::vector<LayerGeom> plan;
  std::size_t c = arch.channels, h = arch.height, w = arch.width;
  bool flat = false;
  int param = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    LayerGeom g{l.kind, c, h, w, c, h, w};
    const std::string where = "layer " + std::to_string(i) + " (" + kind_name(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::Conv: {
        if (flat) throw ArchError(where + "conv after flatten");
        if (l.kernel == 0 || l.kernel % 2 == 0) throw ArchError(where + "kernel must be odd");
        if (l.out_channels == 0) throw ArchError(where + "out_channels must be positive");
        if (l.stride == 0) throw ArchError(where + "stride must be positive");
        g.kernel = l.kernel;
        g.stride = l.stride;
        g.pad = l.kernel / 2;
        g.out_c = l.out_channels;
        g.out_h = (h + 2 * g.pad - l.kernel) / l.stride + 1;
        g.out_w = (w + 2 * g.pad - l.kernel) / l.stride + 1;
        g.param = param;
        param += 2;
        break;
      }
      case LayerKind::Relu:
        break;
      case LayerKind::MaxPool:
        if (flat) throw ArchError(where + "maxpool after flatten");
        if (h < 2 || w < 2) throw ArchError(where + "input smaller than 2x2");
        g.out_h = h / 2;
        g.out_w = w / 2;
        break;
      case LayerKind::Flatten:
        g.out_c = c * h * w;
        g.out_h = g.out_w = 1;
        flat = true;
        break;
      case LayerKind::Dense:
        if (h != 1 || w != 1) throw ArchError(where + "dense needs flattened input");
        if (l.units == 0) throw ArchError(where + "units must be positive");
        g.out_c = l.units;
        g.param = param;
        param += 2;
        break;
    }
    c = g.out_c;
    h = g.out_h;
    w = g.out_w;
    plan.push_back(g);
  }
  const LayerSpec& last = arch.layers.back();
  if (last.kind != LayerKind::Dense) throw ArchError("final layer must be dense(N)");
  if (last.units < 2) throw ArchError("class count N must be >= 2");
  return plan;
}

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

// Unfolds the zero-padded input into a (in_c*k*k) x (out_h*out_w) matrix so
// a convolution becomes one matrix product.
void im2col(const LayerGeom& g, const float* in, float* col) {
  const std::size_t K = g.kernel, P = g.out_h * g.out_w;
  for (std::size_t ic = 0; ic < g.in_c; ++ic) {
    const float* x = in + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        float* row = col + ((ic * K + ky) * K + kx) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = x + iy * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

// Scatters column gradients back onto the input planes (adjoint of im2col).
void col2im(const LayerGeom& g, const float* col, float* gin) {
  const std::size_t K = g.kernel, P = g.out_h * g.out_w;
  for (std::size_t ic = 0; ic < g.in_c; ++ic) {
    float* x = gin + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        const float* row = col + ((ic * K + ky) * K + kx) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          const float* src = row + oy * g.out_w;
          float* dst = x + iy * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::size_t col_rows(const LayerGeom& g) { return g.in_c * g.kernel * g.kernel; }

void conv_forward(const LayerGeom& g, const float* in, const float* W, const float* bias,
                  std::vector<float>& col, float* out) {
  const std::size_t P = g.out_h * g.out_w, R = col_rows(g);
  col.resize(R * P);
  im2col(g, in, col.data());
  MatMap o(out, static_cast<long>(g.out_c), static_cast<long>(P));
  o.noalias() = ConstMatMap(W, static_cast<long>(g.out_c), static_cast<long>(R)) *
                ConstMatMap(col.data(), static_cast<long>(R), static_cast<long>(P));
  o.colwise() += ConstVecMap(bias, static_cast<long>(g.out_c));
}

// Accumulates input and/or parameter gradients of a conv layer.
void conv_backward(const LayerGeom& g, const std::vector<float>& col, const float* W,
                   const float* gout, float* gin, float* gW, float* gbias) {
  const long P = static_cast<long>(g.out_h * g.out_w), R = static_cast<long>(col_rows(g));
  const long C = static_cast<long>(g.out_c);
  ConstMatMap go(gout, C, P);
  if (gbias) {
    for (long c = 0; c < C; ++c) {
      const float* row = gout + c * P;
      float acc = 0.0f;
      for (long p = 0; p < P; ++p) acc += row[p];
      gbias[c] += acc;
    }
  }
  if (gW) MatMap(gW, C, R).noalias() += go * ConstMatMap(col.data(), R, P).transpose();
  if (gin) {
    RowMatrix gcol(R, P);
    gcol.noalias() = ConstMatMap(W, C, R).transpose() * go;
    col2im(g, gcol.data(), gin);
  }
}

// Plain loops with a fixed summation order; Eigen's GEMV picks its order
// from buffer alignment.
void dense_forward(const LayerGeom& g, const float* in, const float* W, const float* bias,
                   float* out) {
  const std::size_t I = g.in_size(), U = g.out_c;
  std::copy(bias, bias + U, out);
  for (std::size_t i = 0; i < I; ++i) {
    const float x = in[i];
    const float* row = W + i * U;
    for (std::size_t u = 0; u < U; ++u) out[u] += x * row[u];
  }
}

void dense_backward(const LayerGeom& g, const float* in, const float* W, const float* gout,
                    float* gin, float* gW, float* gbias) {
  const std::size_t I = g.in_size(), U = g.out_c;
  for (std::size_t i = 0; i < I; ++i) {
    const float* row = W + i * U;
    if (gin) {
      float acc = 0.0f;
      for (std::size_t u = 0; u < U; ++u) acc += row[u] * gout[u];
      gin[i] += acc;
    }
    if (gW) {
      float* grow = gW + i * U;
      for (std::size_t u = 0; u < U; ++u) grow[u] += in[i] * gout[u];
    }
  }
  if (gbias)
    for (std::size_t u = 0; u < U; ++u) gbias[u] += gout[u];
}

void maxpool_forward(const LayerGeom& g, const float* in, float* out, std::uint32_t* index) {
  for (std::size_t c = 0; c < g.out_c; ++c) {
    for (std::size_t y = 0; y < g.out_h; ++y) {
      for (std::size_t x = 0; x < g.out_w; ++x) {
        const std::size_t base = (c * g.in_h + 2 * y) * g.in_w + 2 * x;
        std::size_t best = base;
        for (std::size_t cand : {base + 1, base + g.in_w, base + g.in_w + 1})
          if (in[cand] > in[best]) best = cand;
        const std::size_t o = (c * g.out_h + y) * g.out_w + x;
        out[o] = in[best];
        index[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

struct Trace {
  std::vector<std::vector<float>> acts;  // acts[0] = CHW input, acts[i+1] = layer i output
  std::vector<std::vector<std::uint32_t>> pool_index;
  std::vector<std::vector<float>> cols;  // im2col buffers of conv layers
};

struct Network {
  const ModelKey& model;
  std::vector<LayerGeom> plan;

  explicit Network(const ModelKey& m) : model(m), plan(make_plan(m.arch)) {}

  void load_input(const Image& image, Trace& t) const {
    const ArchSpec& a = model.arch;
    if (image.shape != a.input_shape()) {
      throw ShapeError("image shape " + shape_string(image.shape) + " does not match model input " +
                       shape_string(a.input_shape()));
    }
    t.acts.resize(plan.size() + 1);
    t.pool_index.resize(plan.size());
    t.cols.resize(plan.size());
    auto& in = t.acts[0];
    in.resize(image.size());
    const std::size_t hw = a.height * a.width;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < a.channels; ++c) in[c * hw + p] = image[p * a.channels + c];
  }

  const std::vector<float>& forward(const Image& image, Trace& t) const {
    load_input(image, t);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const LayerGeom& g = plan[i];
      const float* in = t.acts[i].data();
      auto& out = t.acts[i + 1];
      out.resize(g.out_size());
      switch (g.kind) {
        case LayerKind::Conv:
          conv_forward(g, in, model.weights[g.param].data.data(),
                       model.weights[g.param + 1].data.data(), t.cols[i], out.data());
          break;
        case LayerKind::Dense:
          dense_forward(g, in, model.weights[g.param].data.data(),
                        model.weights[g.param + 1].data.data(), out.data());
          break;
        case LayerKind::Relu:
          for (std::size_t j = 0; j < out.size(); ++j) out[j] = in[j] > 0.0f ? in[j] : 0.0f;
          break;
        case LayerKind::MaxPool:
          t.pool_index[i].resize(g.out_size());
          maxpool_forward(g, in, out.data(), t.pool_index[i].data());
          break;
        case LayerKind::Flatten:
          std::copy(in, in + g.in_size(), out.begin());
          break;
      }
    }
    return t.acts.back();
  }

  // Propagates d loss / d logits back. Either output may be null.
  void backward(const Trace& t, std::vector<float> grad, std::vector<float>* grad_input,
                std::vector<std::vector<float>>* param_grads) const {
    for (std::size_t li = plan.size(); li-- > 0;) {
      const LayerGeom& g = plan[li];
      const bool need_input = li > 0 || grad_input != nullptr;
      std::vector<float> gin(need_input ? g.in_size() : 0, 0.0f);
      const float* in = t.acts[li].data();
      switch (g.kind) {
        case LayerKind::Conv:
        case LayerKind::Dense: {
          float* gW = param_grads ? (*param_grads)[g.param].data() : nullptr;
          float* gb = param_grads ? (*param_grads)[g.param + 1].data() : nullptr;
          float* gi = need_input ? gin.data() : nullptr;
          const float* W = model.weights[g.param].data.data();
          if (g.kind == LayerKind::Conv)
            conv_backward(g, t.cols[li], W, grad.data(), gi, gW, gb);
          else
            dense_backward(g, in, W, grad.data(), gi, gW, gb);
          break;
        }
        case LayerKind::Relu: {
          const auto& out = t.acts[li + 1];
          if (need_input)
            for (std::size_t j = 0; j < gin.size(); ++j) gin[j] = out[j] > 0.0f ? grad[j] : 0.0f;
          break;
        }
        case LayerKind::MaxPool:
          if (need_input) {
            const auto& idx = t.pool_index[li];
            for (std::size_t j = 0; j < idx.size(); ++j) gin[idx[j]] += grad[j];
          }
          break;
        case LayerKind::Flatten:
          if (need_input) gin = grad;
          break;
      }
      if (!need_input) return;
      grad = std::move(gin);
    }
    if (grad_input) *grad_input = std::move(grad);
  }

  Tensor input_gradient_image(const std::vector<float>& chw) const {
    const ArchSpec& a = model.arch;
    Tensor out(a.input_shape());
    const std::size_t hw = a.height * a.width;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < a.channels; ++c) out[p * a.channels + c] = chw[c * hw + p];
    return out;
  }
};

std::vector<float> softmax(const std::vector<float>& z) {
  const float m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(static_cast<double>(z[i]) - m);
    sum += e[i];
  }
  std::vector<float> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<float>(e[i] / sum);
  return p;
}

void check_class(const ModelKey& model, ClassId c) {
  if (c >= model.num_classes())
    throw ShapeError("class " + std::to_string(c) + " out of range for N=" +
                     std::to_string(model.num_classes()));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t ArchSpec::num_classes() const {
  if (layers.empty() || layers.back().kind != LayerKind::Dense) return 0;
  return layers.back().units;
}

ArchSpec desk_arch(std::size_t num_classes, std::size_t height, std::size_t width,
                   std::size_t channels) {
  ArchSpec a{height, width, channels, {}};
  a.layers = {LayerSpec::conv(3, 16), LayerSpec::relu(),      LayerSpec::maxpool(),
              LayerSpec::conv(3, 32), LayerSpec::relu(),      LayerSpec::maxpool(),
              LayerSpec::flatten(),   LayerSpec::dense(64),   LayerSpec::relu(),
              LayerSpec::dense(num_classes)};
  return a;
}

ArchSpec family_arch(std::size_t num_classes, double width_multiplier, std::size_t depth,
                     std::size_t height, std::size_t width, std::size_t channels) {
  if (width_multiplier <= 0.0) throw ArchError("width multiplier must be positive");
  ArchSpec a{height, width, channels, {}};
  for (std::size_t i = 0; i < depth; ++i) {
    const auto ch = static_cast<std::size_t>(
        std::max(1.0, std::round(8.0 * width_multiplier * static_cast<double>(1u << i))));
    a.layers.push_back(LayerSpec::conv(3, ch));
    a.layers.push_back(LayerSpec::relu());
    a.layers.push_back(LayerSpec::maxpool());
  }
  a.layers.push_back(LayerSpec::flatten());
  a.layers.push_back(LayerSpec::dense(
      static_cast<std::size_t>(std::max(4.0, std::round(32.0 * width_multiplier)))));
  a.layers.push_back(LayerSpec::relu());
  a.layers.push_back(LayerSpec::dense(num_classes));
  validate(a);
  return a;
}

void validate(const ArchSpec& arch) { (void)make_plan(arch); }

std::vector<std::vector<std::size_t>> parameter_shapes(const ArchSpec& arch) {
  std::vector<std::vector<std::size_t>> shapes;
  for (const LayerGeom& g : make_plan(arch)) {
    if (g.kind == LayerKind::Conv) {
      shapes.push_back({g.out_c, g.in_c, g.kernel, g.kernel});
      shapes.push_back({g.out_c});
    } else if (g.kind == LayerKind::Dense) {
      shapes.push_back({g.in_size(), g.out_c});
      shapes.push_back({g.out_c});
    }
  }
  return shapes;
}

namespace {

json arch_json(const ArchSpec& arch) {
  json layers = json::array();
  for (const LayerSpec& l : arch.layers) {
    json j{{"type", kind_name(l.kind)}};
    if (l.kind == LayerKind::Conv) {
      j["kernel"] = l.kernel;
      j["out_channels"] = l.out_channels;
      j["stride"] = l.stride;
    } else if (l.kind == LayerKind::Dense) {
      j["units"] = l.units;
    }
    layers.push_back(j);
  }
  return json{{"input", {arch.height, arch.width, arch.channels}}, {"layers", layers}};
}

ArchSpec arch_from(const json& j) {
  ArchSpec a;
  const auto& input = j.at("input");
  a.height = input.at(0).get<std::size_t>();
  a.width = input.at(1).get<std::size_t>();
  a.channels = input.at(2).get<std::size_t>();
  for (const json& l : j.at("layers")) {
    LayerSpec s;
    s.kind = kind_from_name(l.at("type").get<std::string>());
    if (s.kind == LayerKind::Conv) {
      s.kernel = l.at("kernel").get<std::size_t>();
      s.out_channels = l.at("out_channels").get<std::size_t>();
      s.stride = l.value("stride", std::size_t{1});
    } else if (s.kind == LayerKind::Dense) {
      s.units = l.at("units").get<std::size_t>();
    }
    a.layers.push_back(s);
  }
  validate(a);
  return a;
}

}  // namespace

std::string arch_to_json(const ArchSpec& arch) { return arch_json(arch).dump(); }

ArchSpec arch_from_json(const std::string& text) {
  try {
    return arch_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ArchError(std::string("malformed architecture: ") + e.what());
  }
}

ModelKey build_model(const ArchSpec& arch, std::uint64_t seed) {
  ModelKey m;
  m.arch = arch;
  m.seed = seed;
  const auto shapes = parameter_shapes(arch);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Tensor t(shapes[i]);
    const bool is_bias = i % 2 == 1;
    if (!is_bias) {
      // conv {out, in, k, k}: fan-in = in*k*k; dense {in, units}: fan-in = in
      const std::size_t fan_in =
          shapes[i].size() == 4 ? t.size() / shapes[i][0] : shapes[i][0];
      const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
      Rng rng = make_rng(seed, {0x1417, i});
      std::uniform_real_distribution<float> u(-limit, limit);
      for (float& w : t.data) w = u(rng);
    }
    m.weights.push_back(std::move(t));
  }
  Digest d;
  d.update("advk-init").update(arch_to_json(arch)).update_u64(seed);
  m.fingerprint = d.hex();
  return m;
}

std::vector<float> logits(const ModelKey& model, const Image& image) {
  Network net(model);
  Trace t;
  return net.forward(image, t);
}

std::vector<float> predict(const ModelKey& model, const Image& image) {
  return softmax(logits(model, image));
}

std::vector<ClassId> top_k_from_probabilities(std::span<const float> probabilities,
                                              std::size_t k) {
  if (k < 1 || k > probabilities.size())
    throw ShapeError("top-k: need 1 <= k <= N (k=" + std::to_string(k) + ")");
  std::vector<ClassId> order(probabilities.size());
  std::iota(order.begin(), order.end(), ClassId{0});
  std::stable_sort(order.begin(), order.end(), [&](ClassId a, ClassId b) {
    return probabilities[a] > probabilities[b];
  });
  order.resize(k);
  return order;
}

std::vector<ClassId> top_k_classes(const ModelKey& model, const Image& image, std::size_t k) {
  const auto p = predict(model, image);
  return top_k_from_probabilities(p, k);
}

Tensor weighted_loss_gradient(const ModelKey& model, const Image& image,
                              std::span<const ClassId> classes, std::span<const float> weights) {
  if (classes.size() != weights.size())
    throw ShapeError("weighted_loss_gradient: classes and weights differ in length");
  Network net(model);
  Trace t;
  const auto p = softmax(net.forward(image, t));
  // d/dz sum_i w_i CE(z, c_i) = (sum_i w_i) p - sum_i w_i e_{c_i}
  float wsum = 0.0f;
  for (float w : weights) wsum += w;
  std::vector<float> grad(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) grad[j] = wsum * p[j];
  for (std::size_t i = 0; i < classes.size(); ++i) {
    check_class(model, classes[i]);
    grad[classes[i]] -= weights[i];
  }
  std::vector<float> gin;
  net.backward(t, std::move(grad), &gin, nullptr);
  return net.input_gradient_image(gin);
}

Tensor loss_gradient_wrt_input(const ModelKey& model, const Image& image, ClassId target) {
  const ClassId c[1] = {target};
  const float w[1] = {1.0f};
  return weighted_loss_gradient(model, image, c, w);
}

double accuracy(const ModelKey& model, const data::LabeledDataset& dataset) {
  if (dataset.empty()) return 0.0;
  Network net(model);
  Trace t;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& z = net.forward(dataset.images[i], t);
    const auto best = static_cast<ClassId>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrainReport train(ModelKey& model, const data::LabeledDataset& dataset,
                  const TrainingConfig& config) {
  if (dataset.empty()) throw TrainingError("training dataset is empty");
  if (config.batch_size == 0) throw TrainingError("batch size must be positive");
  const std::size_t N = model.num_classes();
  for (std::uint32_t label : dataset.labels)
    if (label >= N)
      throw TrainingError("label " + std::to_string(label) + " out of range for N=" +
                          std::to_string(N));

  Network net(model);
  Trace t;
  std::vector<std::vector<float>> grads(model.weights.size());
  std::vector<std::vector<float>> velocity(model.weights.size());
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    grads[i].assign(model.weights[i].size(), 0.0f);
    velocity[i].assign(model.weights[i].size(), 0.0f);
  }

  Rng rng = make_rng(config.seed, {0x7a17});
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto lr = static_cast<float>(config.learning_rate);
  const auto mu = static_cast<float>(config.momentum);

  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t s = start; s < end; ++s) {
        const std::size_t idx = order[s];
        auto p = softmax(net.forward(dataset.images[idx], t));
        const std::uint32_t label = dataset.labels[idx];
        loss_sum -= std::log(std::max(static_cast<double>(p[label]), 1e-30));
        p[label] -= 1.0f;
        net.backward(t, std::move(p), nullptr, &grads);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& w = model.weights[i].data;
        auto& v = velocity[i];
        const auto& g = grads[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
          v[j] = mu * v[j] + g[j] * inv;
          w[j] -= lr * v[j];
        }
      }
    }
    report.final_loss = loss_sum / static_cast<double>(dataset.size());
  }
  report.train_accuracy = accuracy(model, dataset);

  Digest d;
  d.update("advk-train")
      .update(model.fingerprint)
      .update(dataset.id)
      .update_u64(config.epochs)
      .update(format_double(config.learning_rate))
      .update_u64(config.batch_size)
      .update(format_double(config.momentum))
      .update_u64(config.seed);
  model.fingerprint = d.hex();
  return report;
}

// ---------------------------------------------------------------------------
// Key file

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint8_t kMagic[4] = {'A', 'D', 'V', 'K'};

}  // namespace

std::vector<std::uint8_t> serialize_key(const ModelKey& model) {
  const auto shapes = parameter_shapes(model.arch);
  if (shapes.size() != model.weights.size())
    throw KeyFileError(KeyFileError::Kind::ShapeMismatch, "weight tensor count does not match arch");
  json header{{"arch", arch_json(model.arch)},
              {"n", model.num_classes()},
              {"seed", model.seed},
              {"fingerprint", model.fingerprint},
              {"shapes", shapes}};
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (model.weights[i].shape != shapes[i])
      throw KeyFileError(KeyFileError::Kind::ShapeMismatch,
                         "weight " + std::to_string(i) + " has shape " +
                             shape_string(model.weights[i].shape));
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u16(out, kKeyFileVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Tensor& t : model.weights)
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

ModelKey deserialize_key(std::span<const std::uint8_t> bytes) {
  using Kind = KeyFileError::Kind;
  if (bytes.size() < 4) throw KeyFileError(Kind::Truncated, "truncated file: no magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw KeyFileError(Kind::BadMagic, "bad magic: not an ADVK key file");
  if (bytes.size() < 10) throw KeyFileError(Kind::Truncated, "truncated file: header prefix");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kKeyFileVersion)
    throw KeyFileError(Kind::VersionMismatch,
                       "version mismatch: file has " + std::to_string(version) + ", expected " +
                           std::to_string(kKeyFileVersion));
  const std::size_t header_len = get_u32(bytes.data() + 6);
  if (bytes.size() < 10 + header_len)
    throw KeyFileError(Kind::Truncated, "truncated file: header");

  ModelKey m;
  std::vector<std::vector<std::size_t>> shapes;
  try {
    const json header = json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
    m.arch = arch_from(header.at("arch"));
    m.seed = header.at("seed").get<std::uint64_t>();
    m.fingerprint = header.at("fingerprint").get<std::string>();
    shapes = header.at("shapes").get<std::vector<std::vector<std::size_t>>>();
    if (header.at("n").get<std::size_t>() != m.num_classes())
      throw KeyFileError(Kind::ShapeMismatch, "header n does not match architecture");
  } catch (const json::exception& e) {
    throw KeyFileError(Kind::BadHeader, std::string("malformed header: ") + e.what());
  } catch (const ArchError& e) {
    throw KeyFileError(Kind::BadHeader, std::string("malformed header: ") + e.what());
  }
  if (shapes != parameter_shapes(m.arch))
    throw KeyFileError(Kind::ShapeMismatch, "weight shapes in header do not match architecture");

  std::size_t floats = 0;
  for (const auto& s : shapes) floats += Tensor::element_count(s);
  const std::size_t payload = bytes.size() - 10 - header_len;
  if (payload < floats * 4)
    throw KeyFileError(Kind::Truncated, "truncated file: weight payload has " +
                                            std::to_string(payload) + " bytes, need " +
                                            std::to_string(floats * 4));
  if (payload > floats * 4)
    throw KeyFileError(Kind::ShapeMismatch, "weight count mismatch: trailing bytes after weights");

  const std::uint8_t* p = bytes.data() + 10 + header_len;
  for (const auto& s : shapes) {
    Tensor t(s);
    for (float& v : t.data) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
    m.weights.push_back(std::move(t));
  }
  return m;
}

void save_key(const ModelKey& model, const std::filesystem::path& path) {
  const auto bytes = serialize_key(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw KeyFileError(KeyFileError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw KeyFileError(KeyFileError::Kind::Io, "write failed: " + path.string());
}

ModelKey load_key(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KeyFileError(KeyFileError::Kind::Io, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_key(bytes);
}

std::vector<ModelKey> generate_model_family(const std::vector<FamilyGridPoint>& grid,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::size_t num_classes,
                                            const std::vector<std::size_t>& input_shape,
                                            const std::optional<FamilyTraining>& training) {
  if (grid.empty() || seeds.empty()) throw ArchError("model family grid is empty");
  if (input_shape.size() != 3) throw ArchError("input shape must be {H, W, C}");
  std::vector<ModelKey> family;
  for (const FamilyGridPoint& point : grid) {
    const ArchSpec arch = family_arch(num_classes, point.width_multiplier, point.depth,
                                      input_shape[0], input_shape[1], input_shape[2]);
    for (std::uint64_t seed : seeds) {
      ModelKey m = build_model(arch, seed);
      if (training && training->dataset) {
        TrainingConfig cfg = training->config;
        cfg.seed = seed;
        train(m, *training->dataset, cfg);
      }
      family.push_back(std::move(m));
    }
  }
  return family;
}

}  // namespace advstego::nn
