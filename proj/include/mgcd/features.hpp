#pragma once

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "mgcd/trainer.hpp"

namespace mgcd {

// Top-layer feature maps per grid: the activation entering each grid's final
// fully-connected score layer, plus the concatenated flat vector.
struct FeatureBundle {
  std::vector<Tensor> per_grid;  // (N, C_s, H_s, W_s)
  Tensor flat;                   // (N, D, 1, 1)
  std::vector<int> dims;         // per-grid flattened sizes, sum = D
};

// Eval-statistics forward passes; the extractor is read-only.
FeatureBundle extract_features(TrainState& state, const Tensor& images);

// Two-layer classification head: a 3x3 stride-1 conv (64 channels by
// default) per grid feature map, concatenation, then one fully-connected
// layer to class logits. The extractor stays frozen; only the head trains.
struct ClassifierHead {
  int classes = 0;
  int conv_channels = 0;
  std::vector<Tensor> conv_w;  // per grid (64, C_s, 3, 3)
  std::vector<Tensor> conv_b;
  Tensor fc_w;  // (K, D, 1, 1)
  Tensor fc_b;
};

struct HeadConfig {
  int classes = 2;
  int conv_channels = 64;
  long iterations = 300;
  double lr0 = 0.05;
  int decay_every = 10;
  int batch = 0;  // <= 0: full batch
  uint64_t seed = 0;
};

ClassifierHead train_classifier(const FeatureBundle& features, const std::vector<int>& labels,
                                const HeadConfig& config);

std::vector<int> classify(const ClassifierHead& head, const FeatureBundle& features);

// Multinomial logistic regression straight on pixels, the no-feature
// baseline.
struct PixelLogreg {
  Tensor w;  // (K, D, 1, 1)
  Tensor b;
  int classes = 0;
};

PixelLogreg train_pixel_logreg(const Tensor& images, const std::vector<int>& labels,
                               const HeadConfig& config);
std::vector<int> classify(const PixelLogreg& model, const Tensor& images);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Mean +- std of f_theta per grid on the four canonical sets.
struct ScoreStats {
  double mean = 0, stddev = 0;
};

struct ScoreDiagnostics {
  // per grid: train, heldout, synthesized, negative
  std::vector<std::array<ScoreStats, 4>> per_grid;
  static constexpr const char* set_names[4] = {"train", "heldout", "synthesized", "negative"};
};

ScoreDiagnostics score_diagnostics(TrainState& state, const Tensor& train_set,
                                   const Tensor& heldout_set, const Tensor& negative_set,
                                   int synth_count = 64);

void write_score_csv(std::ostream& os, const ScoreDiagnostics& diag);

}  // namespace mgcd
