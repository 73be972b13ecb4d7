#pragma once

#include <string>
#include <vector>

#include "mgcd/mask.hpp"
#include "mgcd/trainer.hpp"

namespace mgcd {

// Conditional multi-grid (or single-grid) learning: a mask is placed randomly
// on every training image and only masked pixels evolve during synthesis;
// the full image is observed, so the observed-side gradient is unchanged.
TrainState train_conditional(const Tensor& dataset, TrainConfig config, MaskKind kind,
                             const MaskParams& mask_params, const TrainOpts& opts = {});

// Fills the masked region of each image by the coarse-to-fine masked sweep.
// The grid-0 base is the per-channel mean over unmasked pixels (the masked
// content is unknown at test time); coarse observed values come from
// unmasked pixels only. Unmasked pixels are returned bit-identically.
// The mask is 1x1xHxW (shared) or Nx1xHxW (per image).
Tensor inpaint(TrainState& state, const Tensor& images, const Tensor& mask);

struct InpaintReport {
  MaskKind kind = MaskKind::square;
  std::vector<double> per_image_error;  // mean |diff| over masked pixels
  std::vector<double> per_image_psnr;
  double mean_error = 0;
  double mean_psnr = 0;  // mean over finite entries
  int images = 0;
  long masked_pixels = 0;
};

// Per-pixel L1 error and PSNR over masked pixels only; pixel range [-1, 1]
// gives peak = 2. A perfect reconstruction reports +infinity PSNR.
InpaintReport evaluate_inpainting(const Tensor& originals, const Tensor& reconstructions,
                                  const Tensor& mask, MaskKind kind = MaskKind::square);

void write_inpaint_csv(std::ostream& os, const InpaintReport& report);

}  // namespace mgcd
