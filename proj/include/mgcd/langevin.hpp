#pragma once

#include <iostream>
#include <vector>

#include "mgcd/network.hpp"
#include "mgcd/pyramid.hpp"
#include "mgcd/rng.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

// Finite-step Langevin dynamics:
//   Y <- Y - (delta^2/2) * dE/dY + delta * U,   U ~ N(0, I)
struct LangevinConfig {
  int steps = 30;
  double step_size = 0.3;
  bool clamp = false;  // clamp pixels to [clamp_lo, clamp_hi] after each step
  double clamp_lo = -1.0, clamp_hi = 1.0;
  BnMode stats_mode = BnMode::train;  // batch stats over the chain batch
  bool zero_noise = false;            // test hook: forces U = 0

  void validate() const {
    if (steps < 1) throw ConfigError("langevin: steps must be >= 1");
    if (step_size <= 0) throw ConfigError("langevin: step size must be positive");
    if (clamp && clamp_lo >= clamp_hi) throw ConfigError("langevin: clamp bounds must be ordered");
  }
};

template <typename T>
struct ChainStateT {
  TensorT<T> y;
  int grid = 0;
  long step = 0;
};

using ChainState = ChainStateT<float>;

// Counts Langevin steps consumed per image, for MCMC budget accounting.
struct StepCounter {
  long steps = 0;
};

template <typename T>
void langevin_step(const NetworkSpec& spec, ParamSetT<T>& params,
                   const ReferenceDistribution& ref, ChainStateT<T>& state,
                   const LangevinConfig& cfg, Rng& rng) {
  TensorT<T> grad = grad_input(spec, params, ref, state.y, cfg.stats_mode);
  if (!grad.all_finite())
    throw SamplerDivergence(state.step, static_cast<double>(state.y.max_abs()),
                            "langevin: non-finite energy gradient at step " +
                                std::to_string(state.step) + ", max |Y| = " +
                                std::to_string(static_cast<double>(state.y.max_abs())));
  const T delta = static_cast<T>(cfg.step_size);
  const T half_d2 = static_cast<T>(cfg.step_size * cfg.step_size / 2.0);
  if (cfg.zero_noise) {
    for (size_t i = 0; i < state.y.size(); ++i) state.y.data[i] -= half_d2 * grad.data[i];
  } else {
    for (size_t i = 0; i < state.y.size(); ++i)
      state.y.data[i] -= half_d2 * grad.data[i] - delta * static_cast<T>(rng.normal());
  }
  if (cfg.clamp) {
    const T lo = static_cast<T>(cfg.clamp_lo), hi = static_cast<T>(cfg.clamp_hi);
    for (T& v : state.y.data) v = std::min(hi, std::max(lo, v));
  }
  ++state.step;
}

template <typename T>
TensorT<T> run_chain(const NetworkSpec& spec, ParamSetT<T>& params,
                     const ReferenceDistribution& ref, const TensorT<T>& init,
                     const LangevinConfig& cfg, Rng& rng, StepCounter* budget = nullptr) {
  cfg.validate();
  ChainStateT<T> state{init, params.grid, 0};
  for (int i = 0; i < cfg.steps; ++i) langevin_step(spec, params, ref, state, cfg, rng);
  if (budget) budget->steps += cfg.steps;
  return std::move(state.y);
}

// Masked chain: updates only where mask = 1; unmasked pixels are
// bit-identical to init. The mask is 1x1xHxW (broadcast over batch and
// channels) or Nx1xHxW (one mask per chain).
template <typename T>
TensorT<T> run_chain_masked(const NetworkSpec& spec, ParamSetT<T>& params,
                            const ReferenceDistribution& ref, const TensorT<T>& init,
                            const TensorT<T>& mask, const LangevinConfig& cfg, Rng& rng,
                            StepCounter* budget = nullptr) {
  cfg.validate();
  if (mask.h != init.h || mask.w != init.w || mask.c != 1 ||
      (mask.n != 1 && mask.n != init.n))
    throw ShapeError("run_chain_masked: mask must be 1x1x" + std::to_string(init.h) + "x" +
                     std::to_string(init.w) + " or per-image, got " + mask.shape_str());
  bool any = false;
  for (const T& v : mask.data)
    if (v != T(0)) {
      any = true;
      break;
    }
  if (!any) {
    std::cerr << "warning: all-zero mask, masked chain is a no-op\n";
    return init;
  }

  ChainStateT<T> state{init, params.grid, 0};
  const size_t hw = static_cast<size_t>(init.h) * init.w;
  for (int i = 0; i < cfg.steps; ++i) {
    TensorT<T> before = state.y;
    langevin_step(spec, params, ref, state, cfg, rng);
    // pin unmasked coordinates to their previous (hence initial) bits
    for (int nn = 0; nn < init.n; ++nn) {
      const T* m = mask.data.data() + (mask.n == 1 ? 0 : mask.idx(nn, 0, 0, 0));
      for (int ch = 0; ch < init.c; ++ch) {
        T* cur = state.y.data.data() + state.y.idx(nn, ch, 0, 0);
        const T* prev = before.data.data() + before.idx(nn, ch, 0, 0);
        for (size_t p = 0; p < hw; ++p)
          if (m[p] == T(0)) cur[p] = prev[p];
      }
    }
  }
  if (budget) budget->steps += cfg.steps;
  return std::move(state.y);
}

// Coarse-to-fine sweep: for s = 1..S, up-scale the previous grid's batch and
// run l steps of Langevin dynamics under the grid-s model. Bases are 1x1
// images (observed minimal versions during training, histogram draws for
// generation). Returns the synthesized batch of every grid.
template <typename T>
std::vector<TensorT<T>> sample_multigrid(const std::vector<NetworkSpec>& specs,
                                         std::vector<ParamSetT<T>>& params,
                                         const ReferenceDistribution& ref,
                                         const TensorT<T>& bases, const LangevinConfig& cfg,
                                         Rng& rng, StepCounter* budget = nullptr) {
  if (specs.empty() || specs.size() != params.size())
    throw ShapeError("sample_multigrid: need one spec per grid");
  if (bases.h != 1 || bases.w != 1)
    throw ShapeError("sample_multigrid: bases must be 1x1 images, got " + bases.shape_str());
  std::vector<TensorT<T>> out;
  out.reserve(specs.size());
  TensorT<T> cur = bases;
  for (size_t s = 0; s < specs.size(); ++s) {
    const int factor = specs[s].in_h / cur.h;
    if (factor * cur.h != specs[s].in_h)
      throw ShapeError("sample_multigrid: grid " + std::to_string(s + 1) + " side " +
                       std::to_string(specs[s].in_h) + " is not a multiple of previous side " +
                       std::to_string(cur.h));
    TensorT<T> init = upscale(cur, factor);
    cur = run_chain(specs[s], params[s], ref, init, cfg, rng, budget);
    out.push_back(cur);
  }
  return out;
}

// Masked coarse-to-fine sweep for conditional sampling: at each grid the
// unmasked pixels are pinned to the given observed values.
template <typename T>
std::vector<TensorT<T>> sample_multigrid_masked(const std::vector<NetworkSpec>& specs,
                                                std::vector<ParamSetT<T>>& params,
                                                const ReferenceDistribution& ref,
                                                const TensorT<T>& bases,
                                                const std::vector<TensorT<T>>& grid_masks,
                                                const std::vector<TensorT<T>>& grid_observed,
                                                const LangevinConfig& cfg, Rng& rng,
                                                StepCounter* budget = nullptr) {
  if (specs.size() != grid_masks.size() || specs.size() != grid_observed.size())
    throw ShapeError("sample_multigrid_masked: need one mask and observed batch per grid");
  std::vector<TensorT<T>> out;
  out.reserve(specs.size());
  TensorT<T> cur = bases;
  for (size_t s = 0; s < specs.size(); ++s) {
    const int factor = specs[s].in_h / cur.h;
    TensorT<T> init = upscale(cur, factor);
    const TensorT<T>& mask = grid_masks[s];
    const TensorT<T>& obs = grid_observed[s];
    check_same_shape(init, obs, "sample_multigrid_masked observed");
    const size_t hw = static_cast<size_t>(init.h) * init.w;
    for (int nn = 0; nn < init.n; ++nn) {
      const T* m = mask.data.data() + (mask.n == 1 ? 0 : mask.idx(nn, 0, 0, 0));
      for (int ch = 0; ch < init.c; ++ch) {
        T* dst = init.data.data() + init.idx(nn, ch, 0, 0);
        const T* src = obs.data.data() + obs.idx(nn, ch, 0, 0);
        for (size_t p = 0; p < hw; ++p)
          if (m[p] == T(0)) dst[p] = src[p];
      }
    }
    cur = run_chain_masked(specs[s], params[s], ref, init, mask, cfg, rng, budget);
    out.push_back(cur);
  }
  return out;
}

}  // namespace mgcd
