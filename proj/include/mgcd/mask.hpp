#pragma once

#include <string>

#include "mgcd/rng.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

enum class MaskKind { square, doodle, pepper };

const char* mask_kind_name(MaskKind k);
MaskKind mask_kind_from_name(const std::string& name);

struct MaskParams {
  int square_h = 32, square_w = 32;           // square: fixed size, random position
  double pepper_fraction = 0.6;               // pepper: Bernoulli(p) per pixel
  double doodle_lo = 0.20, doodle_hi = 0.30;  // doodle: accepted mask fraction
  int doodle_width = 4;                       // stroke width
};

// Binary 1x1xHxW mask, 1 = pixel to inpaint.
Tensor gen_mask(MaskKind kind, int h, int w, const MaskParams& params, Rng& rng);

double mask_fraction(const Tensor& mask);

}  // namespace mgcd
