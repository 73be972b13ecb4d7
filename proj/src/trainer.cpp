#include "mgcd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace mgcd {

const char* method_name(Method m) {
  switch (m) {
    case Method::multigrid: return "multigrid";
    case Method::singlegrid: return "singlegrid";
    case Method::cd1: return "cd1";
    case Method::persistent: return "persistent";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "multigrid") return Method::multigrid;
  if (name == "singlegrid") return Method::singlegrid;
  if (name == "cd1") return Method::cd1;
  if (name == "persistent") return Method::persistent;
  throw ConfigError("unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (lr0 <= 0) throw ConfigError("initial learning rate must be positive");
  if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (d < 2) throw ConfigError("d must be >= 2");
  if (S < 1) throw ConfigError("S must be >= 1");
  if (sigma <= 0) throw ConfigError("sigma must be positive");
  if (channel_scale <= 0) throw ConfigError("channel_scale must be positive");
  langevin.validate();
  const bool single_model = method == Method::singlegrid || method == Method::persistent;
  if (single_model) {
    if (l_single < 1) throw ConfigError("l_single must be >= 1");
    if (budget_parity && l_single != S * langevin.steps)
      throw ConfigError("budget parity requires l_single == S * l (" + std::to_string(S) +
                        " * " + std::to_string(langevin.steps) +
                        " != " + std::to_string(l_single) + ")");
  }
  if (conditional && method != Method::multigrid && method != Method::singlegrid)
    throw ConfigError("conditional training supports multigrid and singlegrid methods");
}

TrainState make_train_state(const TrainConfig& config, int image_c, int image_side) {
  config.validate();
  TrainState st;
  st.config = config;
  st.image_c = image_c;
  st.image_side = image_side;
  st.rng = Rng(config.seed);

  if (config.method == Method::multigrid) {
    for (int s = 1; s <= config.S; ++s) {
      const int side = grid_side(image_side, config.d, config.S, s);
      auto spec = preset_spec(std::min(s, 3), image_c, side, side, config.channel_scale);
      auto params = init_params<float>(spec, st.rng.next_u64());
      params.grid = s;
      st.specs.push_back(std::move(spec));
      st.params.push_back(std::move(params));
    }
  } else {
    // the baselines reuse the grid-3 structure at full resolution
    auto spec = preset_spec(3, image_c, image_side, image_side, config.channel_scale);
    auto params = init_params<float>(spec, st.rng.next_u64());
    params.grid = 1;
    st.specs.push_back(std::move(spec));
    st.params.push_back(std::move(params));
  }
  return st;
}

double learning_rate(const TrainConfig& config, long t) {
  return config.lr0 / (1.0 + std::log(1.0 + static_cast<double>(t / config.decay_every)));
}

void update_params(TrainState& state, const std::vector<GradMap>& grads, long t) {
  if (grads.size() != state.params.size())
    throw ShapeError("update_params: one gradient map per grid required");
  for (const auto& g : grads)
    if (!g.all_finite())
      throw SamplerDivergence(t, 0.0,
                              "non-finite learning gradient at iteration " + std::to_string(t));
  const float lr = static_cast<float>(learning_rate(state.config, t));
  for (size_t s = 0; s < state.params.size(); ++s)
    apply_update(state.params[s], grads[s], lr);
}

namespace {

// Observed per-grid batches (grids 1..S) plus the 1x1 bases.
struct ObservedGrids {
  std::vector<Tensor> grids;
  Tensor bases;
};

ObservedGrids split_pyramids(const Tensor& obs, int d, int S) {
  const auto pyr = build_pyramid(obs, d, S);
  ObservedGrids out;
  out.bases = pyr.levels[0];
  out.grids.assign(pyr.levels.begin() + 1, pyr.levels.end());
  return out;
}

std::vector<int> draw_batch(TrainState& st, int dataset_size) {
  if (st.order.size() != static_cast<size_t>(dataset_size)) {
    st.order.resize(dataset_size);
    std::iota(st.order.begin(), st.order.end(), 0);
    st.order_pos = st.order.size();  // force a shuffle on first use
  }
  std::vector<int> idx;
  idx.reserve(st.config.batch);
  for (int i = 0; i < st.config.batch; ++i) {
    if (st.order_pos >= st.order.size()) {
      for (size_t j = st.order.size(); j > 1; --j)
        std::swap(st.order[j - 1], st.order[st.rng.below(j)]);
      st.order_pos = 0;
    }
    idx.push_back(st.order[st.order_pos++]);
  }
  return idx;
}

// One full-resolution mask per batch element, stacked.
Tensor draw_masks(TrainState& st, int n) {
  Tensor masks(n, 1, st.image_side, st.image_side);
  for (int i = 0; i < n; ++i) {
    Tensor m = gen_mask(st.config.mask_kind, st.image_side, st.image_side,
                        st.config.mask_params, st.rng);
    std::copy(m.data.begin(), m.data.end(), masks.data.begin() + i * m.size());
  }
  return masks;
}

}  // namespace

std::vector<Tensor> synth_multigrid(TrainState& state, const Tensor& obs_batch,
                                    StepCounter* budget) {
  const auto obs = split_pyramids(obs_batch, state.config.d, state.config.S);
  const auto ref = state.config.reference();
  return sample_multigrid(state.specs, state.params, ref, obs.bases, state.config.langevin,
                          state.rng, budget);
}

Tensor synth_cd1(TrainState& state, const Tensor& obs_batch, StepCounter* budget) {
  const auto ref = state.config.reference();
  return run_chain(state.specs[0], state.params[0], ref, obs_batch, state.config.langevin,
                   state.rng, budget);
}

Tensor synth_singlegrid(TrainState& state, const Tensor& obs_batch, StepCounter* budget) {
  // minimal 1x1 version of each image, up-scaled straight to full resolution
  Tensor cur = obs_batch;
  while (cur.h > 1) cur = downscale(cur, state.config.d);
  Tensor init = upscale(cur, state.image_side);
  LangevinConfig cfg = state.config.langevin;
  cfg.steps = state.config.l_single;
  const auto ref = state.config.reference();
  return run_chain(state.specs[0], state.params[0], ref, init, cfg, state.rng, budget);
}

Tensor synth_persistent(TrainState& state, const std::vector<int>& batch_indices,
                        const Tensor& dataset, StepCounter* budget) {
  if (!state.persistent_ready) {
    state.persistent_store = dataset;  // first epoch: chains start at the data
    state.persistent_ready = true;
  }
  for (int i : batch_indices)
    if (i < 0 || i >= state.persistent_store.n)
      throw ShapeError("persistent store index " + std::to_string(i) + " out of range");
  Tensor init = gather_batch(state.persistent_store, batch_indices);
  LangevinConfig cfg = state.config.langevin;
  cfg.steps = state.config.l_single;
  const auto ref = state.config.reference();
  Tensor out = run_chain(state.specs[0], state.params[0], ref, init, cfg, state.rng, budget);
  const size_t stride = static_cast<size_t>(out.c) * out.h * out.w;
  for (size_t i = 0; i < batch_indices.size(); ++i)
    std::copy(out.data.begin() + i * stride, out.data.begin() + (i + 1) * stride,
              state.persistent_store.data.begin() + batch_indices[i] * stride);
  return out;
}

void train(TrainState& state, const Tensor& dataset, const TrainOpts& opts) {
  state.config.validate();
  if (dataset.n < 1) throw ConfigError("dataset is empty");
  if (dataset.c != state.image_c || dataset.h != state.image_side ||
      dataset.w != state.image_side)
    throw ShapeError("dataset " + dataset.shape_str() + " does not match the configured " +
                     std::to_string(state.image_c) + "x" + std::to_string(state.image_side) +
                     "x" + std::to_string(state.image_side));
  const TrainConfig& cfg = state.config;
  const auto ref = cfg.reference();

  if (state.grid0.channels == 0) {
    Tensor cur = dataset;
    while (cur.h > 1) cur = downscale(cur, cfg.d);
    state.grid0 = fit_histogram(cur);
  }

  const bool multigrid = cfg.method == Method::multigrid;
  const long expected_steps = multigrid
                                  ? static_cast<long>(cfg.S) * cfg.langevin.steps
                                  : (cfg.method == Method::cd1 ? cfg.langevin.steps
                                                               : cfg.l_single);

  for (long done = 0; done < cfg.iterations; ++done) {
    const long t = state.iter;
    const auto indices = draw_batch(state, dataset.n);
    const Tensor obs_full = gather_batch(dataset, indices);

    StepCounter budget;
    std::vector<Tensor> obs_grids, syn_grids;
    if (multigrid) {
      auto obs = split_pyramids(obs_full, cfg.d, cfg.S);
      if (cfg.conditional) {
        const Tensor masks = draw_masks(state, obs_full.n);
        const auto grid_masks = build_mask_pyramid(masks, cfg.d, cfg.S);
        syn_grids = sample_multigrid_masked(state.specs, state.params, ref, obs.bases,
                                            grid_masks, obs.grids, cfg.langevin, state.rng,
                                            &budget);
      } else {
        syn_grids = sample_multigrid(state.specs, state.params, ref, obs.bases, cfg.langevin,
                                     state.rng, &budget);
      }
      obs_grids = std::move(obs.grids);
    } else {
      obs_grids = {obs_full};
      switch (cfg.method) {
        case Method::cd1:
          syn_grids = {synth_cd1(state, obs_full, &budget)};
          break;
        case Method::singlegrid:
          if (cfg.conditional) {
            const Tensor masks = draw_masks(state, obs_full.n);
            Tensor bases = obs_full;
            while (bases.h > 1) bases = downscale(bases, cfg.d);
            LangevinConfig lcfg = cfg.langevin;
            lcfg.steps = cfg.l_single;
            std::vector<NetworkSpec> specs1 = {state.specs[0]};
            std::vector<Tensor> masks1 = {masks}, obs1 = {obs_full};
            syn_grids = sample_multigrid_masked(specs1, state.params, ref, bases, masks1, obs1,
                                                lcfg, state.rng, &budget);
          } else {
            syn_grids = {synth_singlegrid(state, obs_full, &budget)};
          }
          break;
        case Method::persistent:
          syn_grids = {synth_persistent(state, indices, dataset, &budget)};
          break;
        default:
          throw ConfigError("unhandled method");
      }
    }

    if (budget.steps != expected_steps)
      throw ConfigError("MCMC budget mismatch: spent " + std::to_string(budget.steps) +
                        " steps, expected " + std::to_string(expected_steps));

    std::vector<GradMap> grads;
    grads.reserve(state.models());
    for (int s = 0; s < state.models(); ++s)
      grads.push_back(grad_params(state.specs[s], state.params[s], obs_grids[s], syn_grids[s],
                                  BnMode::train, /*update_running_on_obs=*/true));

    update_params(state, grads, t);

    const bool diag = cfg.diag_every > 0 && t % cfg.diag_every == 0;
    for (int s = 0; s < state.models(); ++s) {
      DiagRow row;
      row.iter = t;
      row.grid = state.params[s].grid;
      row.grad_l1 = grads[s].l1_norm();
      if (diag) {
        const auto f_obs = score(state.specs[s], state.params[s], obs_grids[s], BnMode::eval);
        const auto f_syn = score(state.specs[s], state.params[s], syn_grids[s], BnMode::eval);
        const auto e_obs = energy(state.specs[s], state.params[s], ref, obs_grids[s]);
        const auto e_syn = energy(state.specs[s], state.params[s], ref, syn_grids[s]);
        auto mean = [](const std::vector<float>& v) {
          double m = 0;
          for (float x : v) m += x;
          return m / v.size();
        };
        row.score_train = mean(f_obs);
        row.score_synth = mean(f_syn);
        row.value_gap = mean(e_syn) - mean(e_obs);
        row.has_scores = true;
      }
      state.history.push_back(row);
    }

    state.iter = t + 1;
    if (opts.log && (t % 50 == 0 || state.iter == cfg.iterations)) {
      (*opts.log) << "iter " << state.iter << "/" << cfg.iterations;
      for (int s = 0; s < state.models(); ++s)
        (*opts.log) << "  grad_l1[g" << state.params[s].grid << "]=" << grads[s].l1_norm();
      (*opts.log) << "\n";
    }
    if (opts.checkpoint_every > 0 && opts.on_checkpoint &&
        (state.iter % opts.checkpoint_every == 0 || state.iter == cfg.iterations))
      opts.on_checkpoint(state);
  }
}

void write_diagnostics_csv(std::ostream& os, const std::vector<DiagRow>& history) {
  os << "iteration,grid,grad_l1,score_train,score_synth,value_gap\n";
  for (const auto& r : history) {
    os << r.iter << "," << r.grid << "," << r.grad_l1 << ",";
    if (r.has_scores)
      os << r.score_train << "," << r.score_synth << "," << r.value_gap;
    else
      os << ",,";
    os << "\n";
  }
}

}  // namespace mgcd
