#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mgcd/rng.hpp"
#include "mgcd/tape.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

enum class LayerKind : uint8_t { conv = 0, batchnorm = 1, relu = 2, fully_connected = 3 };

struct LayerDesc {
  LayerKind kind = LayerKind::relu;
  int out_channels = 0;  // conv
  int kernel = 0;        // conv
  int stride = 1;        // conv
  int padding = 0;       // conv
  int out_features = 0;  // fully_connected

  static LayerDesc make_conv(int out_c, int k, int stride, int padding) {
    return LayerDesc{LayerKind::conv, out_c, k, stride, padding, 0};
  }
  static LayerDesc make_bn() { return LayerDesc{LayerKind::batchnorm}; }
  static LayerDesc make_relu() { return LayerDesc{LayerKind::relu}; }
  static LayerDesc make_fc(int out_k) {
    return LayerDesc{LayerKind::fully_connected, 0, 0, 1, 0, out_k};
  }

  bool operator==(const LayerDesc&) const = default;
};

struct Shape3 {
  int c = 0, h = 0, w = 0;
  bool operator==(const Shape3&) const = default;
};

// Declarative layer list for one grid's scoring network. The last layer must
// produce exactly one value per example.
struct NetworkSpec {
  int in_c = 0, in_h = 0, in_w = 0;
  std::vector<LayerDesc> layers;

  bool operator==(const NetworkSpec&) const = default;

  // Shapes after each layer; index 0 is the input shape. Throws ShapeError if
  // any layer does not fit.
  std::vector<Shape3> shape_chain() const {
    std::vector<Shape3> chain{{in_c, in_h, in_w}};
    for (size_t li = 0; li < layers.size(); ++li) {
      const LayerDesc& l = layers[li];
      Shape3 cur = chain.back();
      switch (l.kind) {
        case LayerKind::conv: {
          const int oh = (cur.h + 2 * l.padding - l.kernel) / l.stride + 1;
          const int ow = (cur.w + 2 * l.padding - l.kernel) / l.stride + 1;
          if (cur.h + 2 * l.padding < l.kernel || cur.w + 2 * l.padding < l.kernel || oh < 1 ||
              ow < 1)
            throw ShapeError("layer " + std::to_string(li) + ": conv " +
                             std::to_string(l.kernel) + "x" + std::to_string(l.kernel) +
                             " does not fit " + std::to_string(cur.h) + "x" +
                             std::to_string(cur.w));
          cur = {l.out_channels, oh, ow};
          break;
        }
        case LayerKind::batchnorm:
        case LayerKind::relu:
          break;
        case LayerKind::fully_connected:
          cur = {l.out_features, 1, 1};
          break;
      }
      chain.push_back(cur);
    }
    return chain;
  }

  void validate() const {
    const auto chain = shape_chain();
    const Shape3& out = chain.back();
    if (out.c * out.h * out.w != 1)
      throw ShapeError("network must end in a single score per example, got " +
                       std::to_string(out.c) + "x" + std::to_string(out.h) + "x" +
                       std::to_string(out.w));
  }
};

// The paper-style architecture for a given grid, scaled to the input size.
// grid 1: conv5x5/s2, 2x conv3x3/s1, channels 96-128-256
// grid 2: conv5x5/s2, 3x conv3x3/s1, channels 96-128-256-512
// grid 3: conv5x5/s2, conv3x3/s2, conv3x3/s1, channels 96-128-256
// with batchnorm + relu after every conv and a final fully-connected scalar.
// channel_scale shrinks all channel counts for small runs.
inline NetworkSpec preset_spec(int grid, int in_c, int in_h, int in_w,
                               double channel_scale = 1.0) {
  if (grid < 1 || grid > 3) throw ConfigError("preset_spec: grid must be 1, 2 or 3");
  if (channel_scale <= 0) throw ConfigError("preset_spec: channel_scale must be positive");
  if (in_c < 1 || in_h < 2 || in_w < 2)
    throw ShapeError("preset_spec: input " + std::to_string(in_c) + "x" + std::to_string(in_h) +
                     "x" + std::to_string(in_w) + " too small for the conv stack");
  auto ch = [&](int base) { return std::max(1, static_cast<int>(std::lround(base * channel_scale))); };

  NetworkSpec spec;
  spec.in_c = in_c;
  spec.in_h = in_h;
  spec.in_w = in_w;
  auto add_block = [&](int out_c, int k, int stride) {
    spec.layers.push_back(LayerDesc::make_conv(out_c, k, stride, k / 2));
    spec.layers.push_back(LayerDesc::make_bn());
    spec.layers.push_back(LayerDesc::make_relu());
  };
  switch (grid) {
    case 1:
      add_block(ch(96), 5, 2);
      add_block(ch(128), 3, 1);
      add_block(ch(256), 3, 1);
      break;
    case 2:
      add_block(ch(96), 5, 2);
      add_block(ch(128), 3, 1);
      add_block(ch(256), 3, 1);
      add_block(ch(512), 3, 1);
      break;
    case 3:
      add_block(ch(96), 5, 2);
      add_block(ch(128), 3, 2);
      add_block(ch(256), 3, 1);
      break;
  }
  spec.layers.push_back(LayerDesc::make_fc(1));
  spec.validate();
  return spec;
}

// Learnable parameters (and batchnorm running stats) for one grid's network,
// slot-aligned with the spec's layer list.
template <typename T>
struct ParamSetT {
  struct LayerParams {
    TensorT<T> weight;      // conv: (outC,inC,kH,kW); fc: (K,D,1,1)
    TensorT<T> bias;        // (1,outC,1,1) / (1,K,1,1)
    TensorT<T> gamma, beta; // batchnorm: (1,C,1,1)
    BnStats<T> running;
  };
  std::vector<LayerParams> layers;
  int grid = 0;

  template <typename U>
  ParamSetT<U> cast() const {
    ParamSetT<U> out;
    out.grid = grid;
    out.layers.resize(layers.size());
    for (size_t i = 0; i < layers.size(); ++i) {
      out.layers[i].weight = layers[i].weight.template cast<U>();
      out.layers[i].bias = layers[i].bias.template cast<U>();
      out.layers[i].gamma = layers[i].gamma.template cast<U>();
      out.layers[i].beta = layers[i].beta.template cast<U>();
      out.layers[i].running.mean.assign(layers[i].running.mean.begin(),
                                        layers[i].running.mean.end());
      out.layers[i].running.var.assign(layers[i].running.var.begin(),
                                       layers[i].running.var.end());
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.all_finite() || !l.bias.all_finite() || !l.gamma.all_finite() ||
          !l.beta.all_finite())
        return false;
      for (T v : l.running.mean)
        if (!std::isfinite(static_cast<double>(v))) return false;
      for (T v : l.running.var)
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using ParamSet = ParamSetT<float>;

inline constexpr double kWeightInitStd = 0.01;
inline constexpr float kBnEpsilon = 1e-5f;
inline constexpr float kBnMomentum = 0.1f;

// Weights ~ N(0, 0.01^2) truncated at +-2 sigma, biases 0, gamma 1, beta 0.
template <typename T = float>
ParamSetT<T> init_params(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  auto trunc_normal = [&]() {
    double v;
    do {
      v = rng.normal();
    } while (std::abs(v) > 2.0);
    return static_cast<T>(v * kWeightInitStd);
  };

  ParamSetT<T> params;
  params.layers.resize(spec.layers.size());
  const auto chain = spec.shape_chain();
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& l = spec.layers[li];
    auto& p = params.layers[li];
    const Shape3& in = chain[li];
    switch (l.kind) {
      case LayerKind::conv: {
        p.weight = TensorT<T>(l.out_channels, in.c, l.kernel, l.kernel);
        for (T& v : p.weight.data) v = trunc_normal();
        p.bias = TensorT<T>(1, l.out_channels, 1, 1);
        break;
      }
      case LayerKind::fully_connected: {
        const int d = in.c * in.h * in.w;
        p.weight = TensorT<T>(l.out_features, d, 1, 1);
        for (T& v : p.weight.data) v = trunc_normal();
        p.bias = TensorT<T>(1, l.out_features, 1, 1);
        break;
      }
      case LayerKind::batchnorm: {
        p.gamma = TensorT<T>(1, in.c, 1, 1, T(1));
        p.beta = TensorT<T>(1, in.c, 1, 1, T(0));
        p.running.mean.assign(in.c, T(0));
        p.running.var.assign(in.c, T(1));
        break;
      }
      case LayerKind::relu:
        break;
    }
  }
  return params;
}

// Reference (negative) distribution p0 of the exponential-tilting model.
struct ReferenceDistribution {
  enum class Kind { gaussian, uniform };
  Kind kind = Kind::gaussian;
  double sigma = 1.0;        // gaussian
  double lo = -1.0, hi = 1.0;  // uniform support / pixel range

  static ReferenceDistribution gaussian(double sigma = 1.0) {
    if (sigma <= 0) throw ConfigError("reference sigma must be positive");
    return {Kind::gaussian, sigma, -1.0, 1.0};
  }
  static ReferenceDistribution uniform(double lo = -1.0, double hi = 1.0) {
    if (lo >= hi) throw ConfigError("uniform reference bounds must be ordered");
    return {Kind::uniform, 1.0, lo, hi};
  }
};

// Forward options for one scoring pass.
struct ForwardOpts {
  BnMode bn_mode = BnMode::eval;
  bool update_running = false;   // train-mode EMA update of running stats
  bool params_need_grad = false;
  bool input_needs_grad = false;
};

// A scoring forward recorded on a tape; per-example scores live at `output`
// with shape (N,1,1,1).
template <typename T>
struct ScoreGraph {
  Tape<T> tape;
  int input = -1;
  int output = -1;
  // Slot ids of the learnable tensors, aligned with spec layers:
  // conv/fc: {weight, bias}; batchnorm: {gamma, beta}.
  std::vector<std::array<int, 2>> param_ids;
  // Output slot of each layer, aligned with spec layers.
  std::vector<int> layer_outputs;
};

template <typename T>
ScoreGraph<T> score_graph(const NetworkSpec& spec, ParamSetT<T>& params, const TensorT<T>& y,
                          const ForwardOpts& opts) {
  if (y.c != spec.in_c || y.h != spec.in_h || y.w != spec.in_w)
    throw ShapeError("score: input " + y.shape_str() + " does not match spec " +
                     std::to_string(spec.in_c) + "x" + std::to_string(spec.in_h) + "x" +
                     std::to_string(spec.in_w));
  if (params.layers.size() != spec.layers.size())
    throw ShapeError("score: parameter set does not match spec layer count");

  ScoreGraph<T> g;
  g.input = g.tape.leaf(y, opts.input_needs_grad);
  g.param_ids.assign(spec.layers.size(), {-1, -1});
  int cur = g.input;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& l = spec.layers[li];
    auto& p = params.layers[li];
    switch (l.kind) {
      case LayerKind::conv: {
        const int w_id = g.tape.leaf(p.weight, opts.params_need_grad);
        const int b_id = g.tape.leaf(p.bias, opts.params_need_grad);
        g.param_ids[li] = {w_id, b_id};
        cur = g.tape.conv2d(cur, w_id, b_id, l.stride, l.padding);
        break;
      }
      case LayerKind::batchnorm: {
        const int g_id = g.tape.leaf(p.gamma, opts.params_need_grad);
        const int be_id = g.tape.leaf(p.beta, opts.params_need_grad);
        g.param_ids[li] = {g_id, be_id};
        cur = g.tape.batchnorm(cur, g_id, be_id, &p.running, opts.bn_mode, opts.update_running,
                               static_cast<T>(kBnEpsilon), static_cast<T>(kBnMomentum));
        break;
      }
      case LayerKind::relu:
        cur = g.tape.relu(cur);
        break;
      case LayerKind::fully_connected: {
        const int w_id = g.tape.leaf(p.weight, opts.params_need_grad);
        const int b_id = g.tape.leaf(p.bias, opts.params_need_grad);
        g.param_ids[li] = {w_id, b_id};
        cur = g.tape.fully_connected(cur, w_id, b_id);
        break;
      }
    }
    g.layer_outputs.push_back(cur);
  }
  const TensorT<T>& out = g.tape.value(cur);
  if (out.c * out.h * out.w != 1)
    throw ShapeError("score: network output is not one value per example: " + out.shape_str());
  g.output = cur;
  return g;
}

// Hash of the sign pattern of every relu input. A finite-difference probe is
// a valid derivative oracle only if this signature is identical at the +h and
// -h evaluations (no kink inside the probed interval).
template <typename T>
uint64_t relu_sign_hash(const NetworkSpec& spec, const ScoreGraph<T>& g) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    if (spec.layers[li].kind != LayerKind::relu) continue;
    const int in_id = li == 0 ? g.input : g.layer_outputs[li - 1];
    for (const T& v : g.tape.value(in_id).data) {
      h ^= static_cast<uint64_t>(v > T(0));
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// f_theta(Y_i) per example.
template <typename T>
std::vector<T> score(const NetworkSpec& spec, ParamSetT<T>& params, const TensorT<T>& y,
                     BnMode bn_mode = BnMode::eval) {
  ForwardOpts opts;
  opts.bn_mode = bn_mode;
  auto g = score_graph(spec, params, y, opts);
  return g.tape.value(g.output).data;
}

// E(Y) = |Y|^2 / (2 sigma^2) - f(Y) for the gaussian reference, -f(Y) for the
// uniform reference.
template <typename T>
std::vector<T> energy(const NetworkSpec& spec, ParamSetT<T>& params,
                      const ReferenceDistribution& ref, const TensorT<T>& y,
                      BnMode bn_mode = BnMode::eval) {
  std::vector<T> e = score(spec, params, y, bn_mode);
  for (T& v : e) v = -v;
  if (ref.kind == ReferenceDistribution::Kind::gaussian) {
    const T inv2s2 = static_cast<T>(1.0 / (2.0 * ref.sigma * ref.sigma));
    const size_t per = static_cast<size_t>(y.c) * y.h * y.w;
    for (int nn = 0; nn < y.n; ++nn) {
      T s = 0;
      const T* p = y.data.data() + nn * per;
      for (size_t i = 0; i < per; ++i) s += p[i] * p[i];
      e[nn] += inv2s2 * s;
    }
  }
  return e;
}

// dE/dY per example: Y/sigma^2 - df/dY (gaussian) or -df/dY (uniform).
// Batch-norm batch statistics couple the examples in train mode; the coupled
// gradient is the correct one for Langevin updates over the chain batch.
template <typename T>
TensorT<T> grad_input(const NetworkSpec& spec, ParamSetT<T>& params,
                      const ReferenceDistribution& ref, const TensorT<T>& y,
                      BnMode bn_mode = BnMode::train) {
  ForwardOpts opts;
  opts.bn_mode = bn_mode;
  opts.input_needs_grad = true;
  auto g = score_graph(spec, params, y, opts);
  const TensorT<T>& out = g.tape.value(g.output);
  TensorT<T> seed(out.n, out.c, out.h, out.w, T(-1));
  g.tape.backward(g.output, std::move(seed));
  TensorT<T> grad = g.tape.grad_of(g.input);
  if (ref.kind == ReferenceDistribution::Kind::gaussian) {
    const T inv_s2 = static_cast<T>(1.0 / (ref.sigma * ref.sigma));
    for (size_t i = 0; i < grad.size(); ++i) grad.data[i] += inv_s2 * y.data[i];
  }
  return grad;
}

// Gradients of the learnable tensors, slot-aligned with the spec layers.
template <typename T>
struct GradMapT {
  struct LayerGrads {
    TensorT<T> weight, bias, gamma, beta;
  };
  std::vector<LayerGrads> layers;

  T l1_norm() const {
    T s = 0;
    for (const auto& l : layers) {
      if (!l.weight.empty()) s += mgcd::l1_norm(l.weight);
      if (!l.bias.empty()) s += mgcd::l1_norm(l.bias);
      if (!l.gamma.empty()) s += mgcd::l1_norm(l.gamma);
      if (!l.beta.empty()) s += mgcd::l1_norm(l.beta);
    }
    return s;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!(l.weight.all_finite() && l.bias.all_finite() && l.gamma.all_finite() &&
            l.beta.all_finite()))
        return false;
    return true;
  }

  void scaled_add(T a, const GradMapT& o) {
    for (size_t i = 0; i < layers.size(); ++i) {
      if (!o.layers[i].weight.empty()) axpy(a, o.layers[i].weight, layers[i].weight);
      if (!o.layers[i].bias.empty()) axpy(a, o.layers[i].bias, layers[i].bias);
      if (!o.layers[i].gamma.empty()) axpy(a, o.layers[i].gamma, layers[i].gamma);
      if (!o.layers[i].beta.empty()) axpy(a, o.layers[i].beta, layers[i].beta);
    }
  }
};

using GradMap = GradMapT<float>;

// d/dtheta of (1/n) sum over `batch` of f, scaled by `seed_per_example`.
// The one-sided building block of the learning gradient; also updates running
// stats when asked (observed-side passes during training do).
template <typename T>
GradMapT<T> score_param_grads(const NetworkSpec& spec, ParamSetT<T>& params,
                              const TensorT<T>& batch, T seed_per_example, BnMode bn_mode,
                              bool update_running) {
  if (batch.n < 1) throw ShapeError("score_param_grads: empty batch");
  ForwardOpts opts;
  opts.bn_mode = bn_mode;
  opts.update_running = update_running;
  opts.params_need_grad = true;
  auto g = score_graph(spec, params, batch, opts);
  const TensorT<T>& out = g.tape.value(g.output);
  TensorT<T> seed(out.n, out.c, out.h, out.w, seed_per_example);
  g.tape.backward(g.output, std::move(seed));

  GradMapT<T> grads;
  grads.layers.resize(spec.layers.size());
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const auto [a, b] = g.param_ids[li];
    if (a < 0) continue;
    switch (spec.layers[li].kind) {
      case LayerKind::conv:
      case LayerKind::fully_connected:
        grads.layers[li].weight = g.tape.grad_of(a);
        grads.layers[li].bias = g.tape.grad_of(b);
        break;
      case LayerKind::batchnorm:
        grads.layers[li].gamma = g.tape.grad_of(a);
        grads.layers[li].beta = g.tape.grad_of(b);
        break;
      default:
        break;
    }
  }
  return grads;
}

// Monte Carlo learning gradient: mean over observed of df/dtheta minus mean
// over synthesized of df/dtheta (the ascent direction).
template <typename T>
GradMapT<T> grad_params(const NetworkSpec& spec, ParamSetT<T>& params, const TensorT<T>& y_obs,
                        const TensorT<T>& y_syn, BnMode bn_mode = BnMode::train,
                        bool update_running_on_obs = false) {
  if (y_obs.n < 1 || y_syn.n < 1) throw ShapeError("grad_params: empty batch");
  GradMapT<T> g_obs = score_param_grads(spec, params, y_obs, static_cast<T>(1.0 / y_obs.n),
                                        bn_mode, update_running_on_obs);
  GradMapT<T> g_syn =
      score_param_grads(spec, params, y_syn, static_cast<T>(1.0 / y_syn.n), bn_mode, false);
  g_obs.scaled_add(T(-1), g_syn);
  return g_obs;
}

// Zero-initialized gradient map matching a parameter set.
template <typename T>
GradMapT<T> zero_grads(const NetworkSpec& spec, const ParamSetT<T>& params) {
  GradMapT<T> g;
  g.layers.resize(spec.layers.size());
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& p = params.layers[li];
    if (!p.weight.empty()) g.layers[li].weight = TensorT<T>(p.weight.n, p.weight.c, p.weight.h, p.weight.w);
    if (!p.bias.empty()) g.layers[li].bias = TensorT<T>(p.bias.n, p.bias.c, p.bias.h, p.bias.w);
    if (!p.gamma.empty()) g.layers[li].gamma = TensorT<T>(p.gamma.n, p.gamma.c, p.gamma.h, p.gamma.w);
    if (!p.beta.empty()) g.layers[li].beta = TensorT<T>(p.beta.n, p.beta.c, p.beta.h, p.beta.w);
  }
  return g;
}

// theta += a * grad over all learnable tensors (running stats untouched).
template <typename T>
void apply_update(ParamSetT<T>& params, const GradMapT<T>& grads, T a) {
  if (grads.layers.size() != params.layers.size())
    throw ShapeError("apply_update: gradient map does not match parameter set");
  for (size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    if (!g.weight.empty()) axpy(a, g.weight, p.weight);
    if (!g.bias.empty()) axpy(a, g.bias, p.bias);
    if (!g.gamma.empty()) axpy(a, g.gamma, p.gamma);
    if (!g.beta.empty()) axpy(a, g.beta, p.beta);
  }
}

}  // namespace mgcd
