#include "mgcd/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgcd {

namespace {

// Index of the final fully-connected layer; features are its input.
size_t score_fc_index(const NetworkSpec& spec) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::fully_connected)
    throw ShapeError("feature extraction expects a fully-connected score head");
  return spec.layers.size() - 1;
}

Tensor grid_view(const Tensor& images, int d, int target_side) {
  Tensor cur = images;
  while (cur.h > target_side) cur = downscale(cur, d);
  if (cur.h != target_side)
    throw ShapeError("cannot reduce " + images.shape_str() + " to side " +
                     std::to_string(target_side));
  return cur;
}

}  // namespace

FeatureBundle extract_features(TrainState& state, const Tensor& images) {
  if (state.iter == 0) throw ConfigError("extract_features: the model has not been trained");
  if (images.c != state.image_c || images.h != state.image_side || images.w != state.image_side)
    throw ShapeError("extract_features: images " + images.shape_str() + " do not match");

  FeatureBundle out;
  for (int s = 0; s < state.models(); ++s) {
    const NetworkSpec& spec = state.specs[s];
    const size_t fc = score_fc_index(spec);
    const Tensor view = grid_view(images, state.config.d, spec.in_h);
    ForwardOpts opts;  // eval statistics, nothing needs gradients
    auto g = score_graph(spec, state.params[s], view, opts);
    const int feat_id = fc == 0 ? g.input : g.layer_outputs[fc - 1];
    out.per_grid.push_back(g.tape.value(feat_id));
  }

  int total = 0;
  for (const auto& f : out.per_grid) {
    out.dims.push_back(f.c * f.h * f.w);
    total += out.dims.back();
  }
  out.flat = Tensor(images.n, total, 1, 1);
  for (int nn = 0; nn < images.n; ++nn) {
    float* dst = out.flat.data.data() + static_cast<size_t>(nn) * total;
    for (const auto& f : out.per_grid) {
      const int d = f.c * f.h * f.w;
      const float* src = f.data.data() + static_cast<size_t>(nn) * d;
      std::copy(src, src + d, dst);
      dst += d;
    }
  }
  return out;
}

namespace {

struct HeadForward {
  std::vector<Tape<float>> tapes;  // one per grid
  std::vector<int> w_ids, b_ids, out_ids;
  Tensor concat;  // (N, D, 1, 1)
  std::vector<int> dims;
};

HeadForward head_forward(const ClassifierHead& head, const std::vector<Tensor>& feats,
                         bool needs_grad) {
  HeadForward f;
  f.tapes.resize(feats.size());
  int total = 0;
  std::vector<const Tensor*> outs;
  for (size_t g = 0; g < feats.size(); ++g) {
    auto& tape = f.tapes[g];
    const int x = tape.leaf(feats[g], false);
    const int w = tape.leaf(head.conv_w[g], needs_grad);
    const int b = tape.leaf(head.conv_b[g], needs_grad);
    const int y = tape.relu(tape.conv2d(x, w, b, 1, 1));
    f.w_ids.push_back(w);
    f.b_ids.push_back(b);
    f.out_ids.push_back(y);
    const Tensor& v = tape.value(y);
    f.dims.push_back(v.c * v.h * v.w);
    total += f.dims.back();
    outs.push_back(&v);
  }
  const int n = feats[0].n;
  f.concat = Tensor(n, total, 1, 1);
  for (int nn = 0; nn < n; ++nn) {
    float* dst = f.concat.data.data() + static_cast<size_t>(nn) * total;
    for (size_t g = 0; g < outs.size(); ++g) {
      const float* src = outs[g]->data.data() + static_cast<size_t>(nn) * f.dims[g];
      std::copy(src, src + f.dims[g], dst);
      dst += f.dims[g];
    }
  }
  return f;
}

// logits = X W^T + b
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.n, d = x.c, k = w.n;
  Tensor logits(n, k, 1, 1);
  CMatMap<float> xm(x.data.data(), n, d);
  CMatMap<float> wm(w.data.data(), k, d);
  MatMap<float> om(logits.data.data(), n, k);
  om.noalias() = xm * wm.transpose();
  for (int nn = 0; nn < n; ++nn) om.row(nn) += CMatMap<float>(b.data.data(), 1, k);
  return logits;
}

// softmax cross-entropy; returns mean loss, writes dlogits = (p - onehot)/N
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits) {
  const int n = logits.n, k = logits.c;
  dlogits = Tensor(n, k, 1, 1);
  double loss = 0;
  for (int nn = 0; nn < n; ++nn) {
    const float* z = logits.data.data() + static_cast<size_t>(nn) * k;
    float zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
    const int y = labels[nn];
    loss += -(static_cast<double>(z[y]) - zmax - std::log(denom));
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(z[j]) - zmax) / denom;
      dlogits.data[static_cast<size_t>(nn) * k + j] =
          static_cast<float>((p - (j == y ? 1.0 : 0.0)) / n);
    }
  }
  return loss / n;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.n);
  for (int nn = 0; nn < logits.n; ++nn) {
    const float* z = logits.data.data() + static_cast<size_t>(nn) * logits.c;
    out[nn] = static_cast<int>(std::max_element(z, z + logits.c) - z);
  }
  return out;
}

std::vector<int> subset_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

ClassifierHead train_classifier(const FeatureBundle& features, const std::vector<int>& labels,
                                const HeadConfig& config) {
  if (features.per_grid.empty()) throw ShapeError("train_classifier: no features");
  const int n = features.per_grid[0].n;
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("train_classifier: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " feature rows");
  for (int y : labels)
    if (y < 0 || y >= config.classes) throw ConfigError("label out of range");

  Rng rng(config.seed);
  ClassifierHead head;
  head.classes = config.classes;
  head.conv_channels = config.conv_channels;
  auto trunc_normal = [&]() {
    double v;
    do {
      v = rng.normal();
    } while (std::abs(v) > 2.0);
    return static_cast<float>(v * kWeightInitStd);
  };
  int total = 0;
  for (const auto& f : features.per_grid) {
    head.conv_w.emplace_back(config.conv_channels, f.c, 3, 3);
    for (float& v : head.conv_w.back().data) v = trunc_normal();
    head.conv_b.emplace_back(1, config.conv_channels, 1, 1, 0.0f);
    total += config.conv_channels * f.h * f.w;
  }
  head.fc_w = Tensor(config.classes, total, 1, 1);
  for (float& v : head.fc_w.data) v = trunc_normal();
  head.fc_b = Tensor(1, config.classes, 1, 1, 0.0f);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int batch = config.batch > 0 ? std::min(config.batch, n) : n;

  for (long t = 0; t < config.iterations; ++t) {
    std::vector<int> idx;
    if (batch == n) {
      idx = order;
    } else {
      for (size_t j = order.size(); j > 1; --j) std::swap(order[j - 1], order[rng.below(j)]);
      idx.assign(order.begin(), order.begin() + batch);
    }
    std::vector<Tensor> feats;
    for (const auto& f : features.per_grid) feats.push_back(gather_batch(f, idx));
    const auto batch_labels = subset_labels(labels, idx);

    auto fwd = head_forward(head, feats, true);
    const Tensor logits = affine(fwd.concat, head.fc_w, head.fc_b);
    Tensor dlogits;
    softmax_ce(logits, batch_labels, dlogits);

    // fc gradients and the gradient flowing back into the concat
    const int d = fwd.concat.c, k = head.classes;
    Tensor gw(k, d, 1, 1), gb(1, k, 1, 1), dconcat(batch, d, 1, 1);
    {
      CMatMap<float> dz(dlogits.data.data(), batch, k);
      CMatMap<float> xm(fwd.concat.data.data(), batch, d);
      CMatMap<float> wm(head.fc_w.data.data(), k, d);
      MatMap<float>(gw.data.data(), k, d).noalias() = dz.transpose() * xm;
      MatMap<float>(gb.data.data(), 1, k).noalias() = dz.colwise().sum();
      MatMap<float>(dconcat.data.data(), batch, d).noalias() = dz * wm;
    }

    const float lr = static_cast<float>(
        config.lr0 / (1.0 + std::log(1.0 + static_cast<double>(t / config.decay_every))));
    axpy(-lr, gw, head.fc_w);
    axpy(-lr, gb, head.fc_b);

    int offset = 0;
    for (size_t g = 0; g < feats.size(); ++g) {
      const Tensor& v = fwd.tapes[g].value(fwd.out_ids[g]);
      Tensor seed(v.n, v.c, v.h, v.w);
      for (int nn = 0; nn < batch; ++nn)
        std::copy(dconcat.data.data() + static_cast<size_t>(nn) * d + offset,
                  dconcat.data.data() + static_cast<size_t>(nn) * d + offset + fwd.dims[g],
                  seed.data.data() + static_cast<size_t>(nn) * fwd.dims[g]);
      offset += fwd.dims[g];
      fwd.tapes[g].backward(fwd.out_ids[g], std::move(seed));
      axpy(-lr, fwd.tapes[g].grad_of(fwd.w_ids[g]), head.conv_w[g]);
      axpy(-lr, fwd.tapes[g].grad_of(fwd.b_ids[g]), head.conv_b[g]);
    }
  }
  return head;
}

std::vector<int> classify(const ClassifierHead& head, const FeatureBundle& features) {
  auto fwd = head_forward(head, features.per_grid, false);
  return argmax_rows(affine(fwd.concat, head.fc_w, head.fc_b));
}

PixelLogreg train_pixel_logreg(const Tensor& images, const std::vector<int>& labels,
                               const HeadConfig& config) {
  const int n = images.n, d = images.c * images.h * images.w;
  if (static_cast<int>(labels.size()) != n) throw ShapeError("train_pixel_logreg: label count");
  PixelLogreg model;
  model.classes = config.classes;
  model.w = Tensor(config.classes, d, 1, 1, 0.0f);
  model.b = Tensor(1, config.classes, 1, 1, 0.0f);

  Tensor flat(n, d, 1, 1);
  flat.data = images.data;

  for (long t = 0; t < config.iterations; ++t) {
    const Tensor logits = affine(flat, model.w, model.b);
    Tensor dlogits;
    softmax_ce(logits, labels, dlogits);
    Tensor gw(config.classes, d, 1, 1), gb(1, config.classes, 1, 1);
    CMatMap<float> dz(dlogits.data.data(), n, config.classes);
    CMatMap<float> xm(flat.data.data(), n, d);
    MatMap<float>(gw.data.data(), config.classes, d).noalias() = dz.transpose() * xm;
    MatMap<float>(gb.data.data(), 1, config.classes).noalias() = dz.colwise().sum();
    const float lr = static_cast<float>(
        config.lr0 / (1.0 + std::log(1.0 + static_cast<double>(t / config.decay_every))));
    axpy(-lr, gw, model.w);
    axpy(-lr, gb, model.b);
  }
  return model;
}

std::vector<int> classify(const PixelLogreg& model, const Tensor& images) {
  const int n = images.n, d = images.c * images.h * images.w;
  Tensor flat(n, d, 1, 1);
  flat.data = images.data;
  return argmax_rows(affine(flat, model.w, model.b));
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw ShapeError("accuracy: size mismatch");
  long ok = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++ok;
  return static_cast<double>(ok) / predictions.size();
}

namespace {

ScoreStats stats_of(const std::vector<float>& v) {
  double m = 0;
  for (float x : v) m += x;
  m /= v.size();
  double s2 = 0;
  for (float x : v) s2 += (x - m) * (x - m);
  return {m, std::sqrt(s2 / v.size())};
}

}  // namespace

ScoreDiagnostics score_diagnostics(TrainState& state, const Tensor& train_set,
                                   const Tensor& heldout_set, const Tensor& negative_set,
                                   int synth_count) {
  if (train_set.n < 1 || heldout_set.n < 1 || negative_set.n < 1)
    throw ShapeError("score_diagnostics: empty set");
  if (state.grid0.channels == 0)
    throw ConfigError("score_diagnostics: state has no grid-0 histogram");

  Rng rng = state.rng.split();
  Tensor bases = sample_histogram(state.grid0, synth_count, rng);
  const auto ref = state.config.reference();
  LangevinConfig lcfg = state.config.langevin;
  if (state.config.method != Method::multigrid) lcfg.steps = state.config.l_single;
  std::vector<Tensor> synth;
  if (state.config.method == Method::multigrid) {
    synth = sample_multigrid(state.specs, state.params, ref, bases, lcfg, rng);
  } else {
    Tensor init = upscale(bases, state.image_side);
    synth = {run_chain(state.specs[0], state.params[0], ref, init, lcfg, rng)};
  }

  ScoreDiagnostics diag;
  for (int s = 0; s < state.models(); ++s) {
    const NetworkSpec& spec = state.specs[s];
    auto view = [&](const Tensor& set) { return grid_view(set, state.config.d, spec.in_h); };
    std::array<ScoreStats, 4> row;
    row[0] = stats_of(score(spec, state.params[s], view(train_set)));
    row[1] = stats_of(score(spec, state.params[s], view(heldout_set)));
    row[2] = stats_of(score(spec, state.params[s], synth[s]));
    row[3] = stats_of(score(spec, state.params[s], view(negative_set)));
    diag.per_grid.push_back(row);
  }
  return diag;
}

void write_score_csv(std::ostream& os, const ScoreDiagnostics& diag) {
  os << "grid,set,mean,stddev\n";
  for (size_t s = 0; s < diag.per_grid.size(); ++s)
    for (int k = 0; k < 4; ++k)
      os << (s + 1) << "," << ScoreDiagnostics::set_names[k] << "," << diag.per_grid[s][k].mean
         << "," << diag.per_grid[s][k].stddev << "\n";
}

}  // namespace mgcd
