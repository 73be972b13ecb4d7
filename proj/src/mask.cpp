#include "mgcd/mask.hpp"

#include <algorithm>
#include <cmath>

#include "mgcd/errors.hpp"

namespace mgcd {

const char* mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::square: return "square";
    case MaskKind::doodle: return "doodle";
    case MaskKind::pepper: return "pepper";
  }
  return "?";
}

MaskKind mask_kind_from_name(const std::string& name) {
  if (name == "square") return MaskKind::square;
  if (name == "doodle") return MaskKind::doodle;
  if (name == "pepper") return MaskKind::pepper;
  throw ConfigError("unknown mask kind '" + name + "'");
}

double mask_fraction(const Tensor& mask) {
  long on = 0;
  for (float v : mask.data)
    if (v != 0.0f) ++on;
  return static_cast<double>(on) / mask.size();
}

namespace {

Tensor square_mask(int h, int w, const MaskParams& p, Rng& rng) {
  if (p.square_h > h || p.square_w > w)
    throw ConfigError("square mask " + std::to_string(p.square_h) + "x" +
                      std::to_string(p.square_w) + " larger than image " + std::to_string(h) +
                      "x" + std::to_string(w));
  Tensor mask(1, 1, h, w, 0.0f);
  const int y0 = static_cast<int>(rng.below(h - p.square_h + 1));
  const int x0 = static_cast<int>(rng.below(w - p.square_w + 1));
  for (int y = 0; y < p.square_h; ++y)
    for (int x = 0; x < p.square_w; ++x) mask.at(0, 0, y0 + y, x0 + x) = 1.0f;
  return mask;
}

Tensor pepper_mask(int h, int w, const MaskParams& p, Rng& rng) {
  Tensor mask(1, 1, h, w, 0.0f);
  for (float& v : mask.data) v = rng.uniform() < p.pepper_fraction ? 1.0f : 0.0f;
  return mask;
}

void paint_brush(Tensor& mask, int cy, int cx, int width) {
  const int r0 = width / 2, r1 = width - r0;
  for (int y = std::max(0, cy - r0); y < std::min(mask.h, cy + r1); ++y)
    for (int x = std::max(0, cx - r0); x < std::min(mask.w, cx + r1); ++x)
      mask.at(0, 0, y, x) = 1.0f;
}

Tensor doodle_mask(int h, int w, const MaskParams& p, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Tensor mask(1, 1, h, w, 0.0f);
    const int strokes = 3 + static_cast<int>(rng.below(4));  // 3..6
    for (int s = 0; s < strokes; ++s) {
      int y = static_cast<int>(rng.below(h));
      int x = static_cast<int>(rng.below(w));
      const int length = (h + w) / 3 + static_cast<int>(rng.below((h + w) / 3 + 1));
      double angle = rng.uniform(0.0, 2.0 * 3.14159265358979);
      for (int t = 0; t < length; ++t) {
        paint_brush(mask, y, x, p.doodle_width);
        angle += rng.normal() * 0.5;  // meandering walk
        y = std::min(h - 1, std::max(0, y + static_cast<int>(std::lround(std::sin(angle)))));
        x = std::min(w - 1, std::max(0, x + static_cast<int>(std::lround(std::cos(angle)))));
      }
    }
    const double frac = mask_fraction(mask);
    if (frac >= p.doodle_lo && frac <= p.doodle_hi) return mask;
  }
  throw ConfigError("doodle mask: could not hit the target fraction on a " + std::to_string(h) +
                    "x" + std::to_string(w) + " image");
}

}  // namespace

Tensor gen_mask(MaskKind kind, int h, int w, const MaskParams& params, Rng& rng) {
  if (h < 1 || w < 1) throw ConfigError("gen_mask: empty image");
  switch (kind) {
    case MaskKind::square: return square_mask(h, w, params, rng);
    case MaskKind::pepper: return pepper_mask(h, w, params, rng);
    case MaskKind::doodle: return doodle_mask(h, w, params, rng);
  }
  throw ConfigError("gen_mask: bad kind");
}

}  // namespace mgcd
