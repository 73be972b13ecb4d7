#pragma once

#include <cmath>
#include <vector>

#include "mgcd/rng.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

// Block-average down-scaling: each d x d block becomes its mean, per channel.
template <typename T>
TensorT<T> downscale(const TensorT<T>& y, int d) {
  if (d < 2) throw ShapeError("downscale: d must be >= 2");
  if (y.h % d != 0 || y.w % d != 0)
    throw ShapeError("downscale: spatial size " + std::to_string(y.h) + "x" +
                     std::to_string(y.w) + " not divisible by d=" + std::to_string(d));
  TensorT<T> out(y.n, y.c, y.h / d, y.w / d);
  const T inv = static_cast<T>(1.0 / (static_cast<double>(d) * d));
  for (int nn = 0; nn < y.n; ++nn)
    for (int ch = 0; ch < y.c; ++ch)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          T s = 0;
          for (int dy = 0; dy < d; ++dy) {
            const T* row = y.data.data() + y.idx(nn, ch, oy * d + dy, ox * d);
            for (int dx = 0; dx < d; ++dx) s += row[dx];
          }
          out.at(nn, ch, oy, ox) = s * inv;
        }
  return out;
}

// Pixel replication by factor d; the right inverse of downscale.
template <typename T>
TensorT<T> upscale(const TensorT<T>& y, int d) {
  if (d < 1) throw ShapeError("upscale: d must be >= 1");
  if (d == 1) return y;
  TensorT<T> out(y.n, y.c, y.h * d, y.w * d);
  for (int nn = 0; nn < y.n; ++nn)
    for (int ch = 0; ch < y.c; ++ch)
      for (int iy = 0; iy < y.h; ++iy)
        for (int dy = 0; dy < d; ++dy) {
          T* row = out.data.data() + out.idx(nn, ch, iy * d + dy, 0);
          const T* src = y.data.data() + y.idx(nn, ch, iy, 0);
          for (int ix = 0; ix < y.w; ++ix)
            for (int dx = 0; dx < d; ++dx) row[ix * d + dx] = src[ix];
        }
  return out;
}

// Multi-grid versions (levels[0] ... levels[S]) of a batch of images.
// levels[0] is the 1x1 version, levels[S] the input. For square inputs of
// side d^S every adjacent pair is related by a factor-d block average; a 1x1
// input degenerates to identical levels (the factor between them is 1).
template <typename T>
struct GridPyramidT {
  std::vector<TensorT<T>> levels;
  int d = 0;
  int S = 0;

  // Up-scaling factor from level s-1 to level s.
  int factor(int s) const {
    if (s < 1 || s > S) throw ShapeError("pyramid factor: level out of range");
    return levels[s].h / levels[s - 1].h;
  }
};

using GridPyramid = GridPyramidT<float>;

// Side of grid s for a full-resolution side `full`: repeated division by d,
// floored at 1 (handles the degenerate 1x1 case).
inline int grid_side(int full, int d, int S, int s) {
  int side = full;
  for (int i = S; i > s; --i) side = side > 1 ? side / d : 1;
  return side;
}

template <typename T>
GridPyramidT<T> build_pyramid(const TensorT<T>& y, int d, int S) {
  if (d < 2) throw ShapeError("build_pyramid: d must be >= 2");
  if (S < 1) throw ShapeError("build_pyramid: S must be >= 1");
  if (y.h != y.w) throw ShapeError("build_pyramid: image must be square, got " + y.shape_str());
  // side must telescope to 1 in S block averages (or already be 1)
  int side = y.h;
  for (int s = 0; s < S && side > 1; ++s) {
    if (side % d != 0)
      throw ShapeError("build_pyramid: side " + std::to_string(y.h) + " is not a power of d=" +
                       std::to_string(d));
    side /= d;
  }
  if (side != 1)
    throw ShapeError("build_pyramid: side " + std::to_string(y.h) + " does not reduce to 1x1 in " +
                     std::to_string(S) + " steps with d=" + std::to_string(d));

  GridPyramidT<T> pyr;
  pyr.d = d;
  pyr.S = S;
  pyr.levels.resize(S + 1);
  pyr.levels[S] = y;
  for (int s = S; s >= 1; --s)
    pyr.levels[s - 1] = pyr.levels[s].h > 1 ? downscale(pyr.levels[s], d) : pyr.levels[s];
  return pyr;
}

// Mask down-scaling: a coarse pixel is masked iff ANY covered fine pixel is
// masked, so no masked information can leak through a block average.
template <typename T>
TensorT<T> mask_downscale(const TensorT<T>& mask, int d) {
  if (mask.h % d != 0 || mask.w % d != 0)
    throw ShapeError("mask_downscale: size not divisible by d");
  TensorT<T> out(mask.n, mask.c, mask.h / d, mask.w / d);
  for (int nn = 0; nn < mask.n; ++nn)
    for (int ch = 0; ch < mask.c; ++ch)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          T any = 0;
          for (int dy = 0; dy < d && !any; ++dy)
            for (int dx = 0; dx < d; ++dx)
              if (mask.at(nn, ch, oy * d + dy, ox * d + dx) != T(0)) {
                any = 1;
                break;
              }
          out.at(nn, ch, oy, ox) = any;
        }
  return out;
}

// Masks for grids 1..S derived from a full-resolution mask (grid S mask is
// the input itself). Degenerate levels keep the same mask.
template <typename T>
std::vector<TensorT<T>> build_mask_pyramid(const TensorT<T>& mask, int d, int S) {
  std::vector<TensorT<T>> masks(S);
  masks[S - 1] = mask;
  for (int s = S - 1; s >= 1; --s)
    masks[s - 1] = masks[s].h > 1 ? mask_downscale(masks[s], d) : masks[s];
  return masks;
}

// Block mean over unmasked fine pixels only (mask is 1 on hidden pixels,
// broadcast over channels). Blocks that are fully masked get 0; their coarse
// pixel is itself masked under the ANY rule, so the value is never used.
template <typename T>
TensorT<T> downscale_unmasked_mean(const TensorT<T>& y, const TensorT<T>& mask, int factor) {
  if (y.h % factor != 0 || y.w % factor != 0)
    throw ShapeError("downscale_unmasked_mean: size not divisible by factor");
  if (mask.h != y.h || mask.w != y.w)
    throw ShapeError("downscale_unmasked_mean: mask shape mismatch");
  TensorT<T> out(y.n, y.c, y.h / factor, y.w / factor);
  for (int nn = 0; nn < y.n; ++nn) {
    const int mn = mask.n == 1 ? 0 : nn;
    for (int ch = 0; ch < y.c; ++ch)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          double s = 0;
          long cnt = 0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) {
              const int iy = oy * factor + dy, ix = ox * factor + dx;
              if (mask.at(mn, 0, iy, ix) == T(0)) {
                s += y.at(nn, ch, iy, ix);
                ++cnt;
              }
            }
          out.at(nn, ch, oy, ox) = cnt > 0 ? static_cast<T>(s / cnt) : T(0);
        }
  }
  return out;
}

// One-dimensional binned model of 1x1 image intensities, per channel.
struct HistogramModel {
  int channels = 0;
  int bins = 0;
  double lo = -1.0, hi = 1.0;
  std::vector<double> probs;  // channels x bins, rows sum to 1

  double prob(int ch, int b) const { return probs[static_cast<size_t>(ch) * bins + b]; }
};

inline constexpr int kHistogramBins = 64;

// Normalized counts over `bins` uniform bins, Laplace-smoothed by +1 per bin.
template <typename T>
HistogramModel fit_histogram(const TensorT<T>& grid0, int bins = kHistogramBins,
                             double lo = -1.0, double hi = 1.0) {
  if (grid0.n < 1 || grid0.size() == 0) throw ShapeError("fit_histogram: empty input");
  if (grid0.h != 1 || grid0.w != 1)
    throw ShapeError("fit_histogram: expects 1x1 intensities, got " + grid0.shape_str());
  if (bins < 1) throw ConfigError("fit_histogram: bins must be >= 1");
  if (lo >= hi) throw ConfigError("fit_histogram: range bounds must be ordered");

  HistogramModel model;
  model.channels = grid0.c;
  model.bins = bins;
  model.lo = lo;
  model.hi = hi;
  model.probs.assign(static_cast<size_t>(grid0.c) * bins, 1.0);  // Laplace +1
  const double scale = bins / (hi - lo);
  for (int nn = 0; nn < grid0.n; ++nn)
    for (int ch = 0; ch < grid0.c; ++ch) {
      const double v = grid0.at(nn, ch, 0, 0);
      int b = static_cast<int>((v - lo) * scale);
      b = std::max(0, std::min(bins - 1, b));
      model.probs[static_cast<size_t>(ch) * bins + b] += 1.0;
    }
  for (int ch = 0; ch < grid0.c; ++ch) {
    double s = 0;
    for (int b = 0; b < bins; ++b) s += model.prob(ch, b);
    for (int b = 0; b < bins; ++b) model.probs[static_cast<size_t>(ch) * bins + b] /= s;
  }
  return model;
}

// Inverse-CDF sampling; uniform within the chosen bin. Returns (n,C,1,1).
template <typename T = float>
TensorT<T> sample_histogram(const HistogramModel& model, int n, Rng& rng) {
  if (model.channels < 1 || model.bins < 1) throw ShapeError("sample_histogram: empty model");
  TensorT<T> out(n, model.channels, 1, 1);
  const double width = (model.hi - model.lo) / model.bins;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < model.channels; ++ch) {
      const double u = rng.uniform();
      double acc = 0;
      int pick = model.bins - 1;
      for (int b = 0; b < model.bins; ++b) {
        acc += model.prob(ch, b);
        if (u < acc) {
          pick = b;
          break;
        }
      }
      const double v = model.lo + (pick + rng.uniform()) * width;
      out.at(i, ch, 0, 0) = static_cast<T>(v);
    }
  return out;
}

}  // namespace mgcd
