#include "mgcd/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace mgcd {

TrainState train_conditional(const Tensor& dataset, TrainConfig config, MaskKind kind,
                             const MaskParams& mask_params, const TrainOpts& opts) {
  config.conditional = true;
  config.mask_kind = kind;
  config.mask_params = mask_params;
  TrainState state = make_train_state(config, dataset.c, dataset.h);
  train(state, dataset, opts);
  return state;
}

Tensor inpaint(TrainState& state, const Tensor& images, const Tensor& mask) {
  if (state.iter == 0) throw ConfigError("inpaint: the model has not been trained");
  if (images.h != state.image_side || images.w != state.image_side ||
      images.c != state.image_c)
    throw ShapeError("inpaint: images " + images.shape_str() + " do not match the model");
  if (mask.h != images.h || mask.w != images.w || mask.c != 1 ||
      (mask.n != 1 && mask.n != images.n))
    throw ShapeError("inpaint: mask " + mask.shape_str() + " does not fit " +
                     images.shape_str());

  bool any = false;
  for (float v : mask.data)
    if (v != 0.0f) {
      any = true;
      break;
    }
  if (!any) return images;

  const TrainConfig& cfg = state.config;
  const int S = state.models();

  // per-grid masks and observed values, computed from unmasked pixels only
  std::vector<Tensor> grid_masks, grid_obs;
  if (cfg.method == Method::multigrid) {
    grid_masks = build_mask_pyramid(mask, cfg.d, cfg.S);
    for (int s = 0; s < S; ++s) {
      const int side = state.specs[s].in_h;
      grid_obs.push_back(downscale_unmasked_mean(images, mask, images.h / side));
    }
  } else {
    grid_masks = {mask};
    grid_obs = {images};
  }

  // grid-0 base: per-channel mean of the unmasked pixels
  Tensor bases(images.n, images.c, 1, 1);
  for (int nn = 0; nn < images.n; ++nn) {
    const int mn = mask.n == 1 ? 0 : nn;
    for (int ch = 0; ch < images.c; ++ch) {
      double s = 0;
      long cnt = 0;
      for (int y = 0; y < images.h; ++y)
        for (int x = 0; x < images.w; ++x)
          if (mask.at(mn, 0, y, x) == 0.0f) {
            s += images.at(nn, ch, y, x);
            ++cnt;
          }
      bases.at(nn, ch, 0, 0) = cnt > 0 ? static_cast<float>(s / cnt) : 0.0f;
    }
  }

  LangevinConfig lcfg = cfg.langevin;
  if (cfg.method != Method::multigrid) lcfg.steps = cfg.l_single;
  const auto ref = cfg.reference();
  auto out = sample_multigrid_masked(state.specs, state.params, ref, bases, grid_masks,
                                     grid_obs, lcfg, state.rng);
  Tensor result = std::move(out[S - 1]);

  // unmasked pixels are the input's, bit for bit
  for (int nn = 0; nn < images.n; ++nn) {
    const int mn = mask.n == 1 ? 0 : nn;
    for (int ch = 0; ch < images.c; ++ch)
      for (int y = 0; y < images.h; ++y)
        for (int x = 0; x < images.w; ++x)
          if (mask.at(mn, 0, y, x) == 0.0f)
            result.at(nn, ch, y, x) = images.at(nn, ch, y, x);
  }
  return result;
}

InpaintReport evaluate_inpainting(const Tensor& originals, const Tensor& reconstructions,
                                  const Tensor& mask, MaskKind kind) {
  check_same_shape(originals, reconstructions, "evaluate_inpainting");
  if (mask.h != originals.h || mask.w != originals.w ||
      (mask.n != 1 && mask.n != originals.n))
    throw ShapeError("evaluate_inpainting: mask " + mask.shape_str() + " does not fit");

  InpaintReport rep;
  rep.kind = kind;
  rep.images = originals.n;
  const double peak = 2.0;  // pixel range [-1, 1]

  double err_sum = 0, psnr_sum = 0;
  int psnr_finite = 0;
  for (int nn = 0; nn < originals.n; ++nn) {
    const int mn = mask.n == 1 ? 0 : nn;
    double abs_sum = 0, sq_sum = 0;
    long cnt = 0;
    for (int ch = 0; ch < originals.c; ++ch)
      for (int y = 0; y < originals.h; ++y)
        for (int x = 0; x < originals.w; ++x) {
          if (mask.at(mn, 0, y, x) == 0.0f) continue;
          const double d = static_cast<double>(reconstructions.at(nn, ch, y, x)) -
                           originals.at(nn, ch, y, x);
          abs_sum += std::abs(d);
          sq_sum += d * d;
          ++cnt;
        }
    if (cnt == 0) throw ShapeError("evaluate_inpainting: mask selects no pixels");
    rep.masked_pixels += cnt;
    const double err = abs_sum / cnt;
    const double mse = sq_sum / cnt;
    const double psnr = mse > 0 ? 10.0 * std::log10(peak * peak / mse)
                                : std::numeric_limits<double>::infinity();
    rep.per_image_error.push_back(err);
    rep.per_image_psnr.push_back(psnr);
    err_sum += err;
    if (std::isfinite(psnr)) {
      psnr_sum += psnr;
      ++psnr_finite;
    }
  }
  rep.mean_error = err_sum / originals.n;
  rep.mean_psnr = psnr_finite > 0 ? psnr_sum / psnr_finite
                                  : std::numeric_limits<double>::infinity();
  return rep;
}

void write_inpaint_csv(std::ostream& os, const InpaintReport& report) {
  os << "image,mask_kind,error,psnr\n";
  for (size_t i = 0; i < report.per_image_error.size(); ++i)
    os << i << "," << mask_kind_name(report.kind) << "," << report.per_image_error[i] << ","
       << report.per_image_psnr[i] << "\n";
  os << "mean," << mask_kind_name(report.kind) << "," << report.mean_error << ","
     << report.mean_psnr << "\n";
}

}  // namespace mgcd
