#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "mgcd/langevin.hpp"
#include "mgcd/mask.hpp"
#include "mgcd/network.hpp"
#include "mgcd/pyramid.hpp"

namespace mgcd {

enum class Method { multigrid, singlegrid, cd1, persistent };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

// One training run's knobs. The paper configuration is method multigrid,
// S = 3, d = 4, l = 30, delta = 0.3, batch 100, lr 0.3 with the single-model
// baselines at l_single = 90 for equal MCMC budget.
struct TrainConfig {
  Method method = Method::multigrid;
  int batch = 32;
  long iterations = 100;
  double lr0 = 0.3;
  int decay_every = 10;
  LangevinConfig langevin;
  int l_single = 90;          // steps for singlegrid / persistent chains
  bool budget_parity = true;  // enforce l_single == S * langevin.steps
  int d = 4;
  int S = 3;
  double channel_scale = 1.0;
  double sigma = 1.0;
  bool uniform_ref = false;
  uint64_t seed = 0;
  int diag_every = 10;  // score/value-gap sampling cadence

  // Conditional learning: sample a full-resolution mask per training image
  // and pin the unmasked pixels during synthesis (multigrid or singlegrid).
  bool conditional = false;
  MaskKind mask_kind = MaskKind::square;
  MaskParams mask_params;

  ReferenceDistribution reference() const {
    return uniform_ref ? ReferenceDistribution::uniform(-1.0, 1.0)
                       : ReferenceDistribution::gaussian(sigma);
  }

  void validate() const;
};

struct DiagRow {
  long iter = 0;
  int grid = 0;
  double grad_l1 = 0;
  double score_train = 0;
  double score_synth = 0;
  double value_gap = 0;
  bool has_scores = false;
};

struct TrainState {
  TrainConfig config;
  int image_c = 0, image_side = 0;
  std::vector<NetworkSpec> specs;  // grids 1..S (multigrid) or single model
  std::vector<ParamSet> params;
  HistogramModel grid0;
  long iter = 0;
  Rng rng{0};

  // persistent CD: one synthesized image per training image
  Tensor persistent_store;
  bool persistent_ready = false;

  // epoch sampling without replacement
  std::vector<int> order;
  size_t order_pos = 0;

  std::vector<DiagRow> history;

  int models() const { return static_cast<int>(specs.size()); }
};

// Builds specs/params for the configured method: per-grid paper presets for
// multigrid, the grid-3 architecture at full resolution for the baselines.
TrainState make_train_state(const TrainConfig& config, int image_c, int image_side);

struct TrainOpts {
  long checkpoint_every = 0;  // 0 = never
  std::function<void(const TrainState&)> on_checkpoint;
  std::ostream* log = nullptr;
};

// Runs config.iterations steps of Algorithm-1-style learning on the dataset
// (N,C,side,side). Synthesis follows the configured method; each iteration
// updates every grid from the same pre-update parameters.
void train(TrainState& state, const Tensor& dataset, const TrainOpts& opts = {});

// Synthesis routines, one per method. Exposed for tests and diagnostics; the
// observed-side gradient never depends on which one produced the batch.
std::vector<Tensor> synth_multigrid(TrainState& state, const Tensor& obs_batch,
                                    StepCounter* budget = nullptr);
Tensor synth_cd1(TrainState& state, const Tensor& obs_batch, StepCounter* budget = nullptr);
Tensor synth_singlegrid(TrainState& state, const Tensor& obs_batch,
                        StepCounter* budget = nullptr);
Tensor synth_persistent(TrainState& state, const std::vector<int>& batch_indices,
                        const Tensor& dataset, StepCounter* budget = nullptr);

// Learning-rate schedule: lr0 / (1 + log(1 + floor(t/k))).
double learning_rate(const TrainConfig& config, long t);

// Ascent step on every model from the same pre-update parameters.
void update_params(TrainState& state, const std::vector<GradMap>& grads, long t);

// iteration,grid,grad_l1,score_train,score_synth,value_gap
void write_diagnostics_csv(std::ostream& os, const std::vector<DiagRow>& history);

}  // namespace mgcd
