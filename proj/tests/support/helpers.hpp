#pragma once

// Shared helpers for test fixtures: trivial score networks and synthetic
// texture datasets.

#include <cmath>
#include <numbers>

#include "mgcd/network.hpp"
#include "mgcd/rng.hpp"
#include "mgcd/tensor.hpp"

namespace helpers {

// Spec + params for f == 0: a single fully-connected layer with zero weight
// and bias. Under the gaussian reference the energy is purely quadratic.
inline std::pair<mgcd::NetworkSpec, mgcd::ParamSet> zero_score_net(int c, int h, int w) {
  mgcd::NetworkSpec spec;
  spec.in_c = c;
  spec.in_h = h;
  spec.in_w = w;
  spec.layers = {mgcd::LayerDesc::make_fc(1)};
  spec.validate();
  mgcd::ParamSet params;
  params.layers.resize(1);
  params.layers[0].weight = mgcd::Tensor(1, c * h * w, 1, 1, 0.0f);
  params.layers[0].bias = mgcd::Tensor(1, 1, 1, 1, 0.0f);
  return {spec, params};
}

template <typename T>
std::pair<mgcd::NetworkSpec, mgcd::ParamSetT<T>> zero_score_net_t(int c, int h, int w) {
  mgcd::NetworkSpec spec;
  spec.in_c = c;
  spec.in_h = h;
  spec.in_w = w;
  spec.layers = {mgcd::LayerDesc::make_fc(1)};
  spec.validate();
  mgcd::ParamSetT<T> params;
  params.layers.resize(1);
  params.layers[0].weight = mgcd::TensorT<T>(1, c * h * w, 1, 1, T(0));
  params.layers[0].bias = mgcd::TensorT<T>(1, 1, 1, 1, T(0));
  return {spec, params};
}

// Square-wave stripe textures in [-1, 1] with random phase and optional
// pixel noise. Horizontal stripes vary along y, vertical along x.
inline mgcd::Tensor make_stripes(int n, int c, int side, bool horizontal, int period,
                                 double amplitude, double noise, mgcd::Rng& rng) {
  mgcd::Tensor out(n, c, side, side);
  for (int i = 0; i < n; ++i) {
    const int phase = static_cast<int>(rng.below(static_cast<uint64_t>(period)));
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          const int t = (horizontal ? y : x) + phase;
          const double wave = ((t / (period / 2)) % 2 == 0) ? amplitude : -amplitude;
          out.at(i, ch, y, x) =
              static_cast<float>(wave + (noise > 0 ? noise * rng.normal() : 0.0));
        }
  }
  for (float& v : out.data) v = std::min(1.0f, std::max(-1.0f, v));
  return out;
}

// Uniform-noise images, the stand-in negative set.
inline mgcd::Tensor make_noise_images(int n, int c, int side, mgcd::Rng& rng) {
  mgcd::Tensor out(n, c, side, side);
  for (float& v : out.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return out;
}

}  // namespace helpers
