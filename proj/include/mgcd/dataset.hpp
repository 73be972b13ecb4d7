#pragma once

#include <string>
#include <vector>

#include "mgcd/png_io.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

// Intensities map affinely: 8-bit v -> v/127.5 - 1, so 0 -> -1 and 255 -> +1.
float u8_to_unit(uint8_t v);
uint8_t unit_to_u8(float v);  // clamp((v+1)*127.5, 0, 255), round to nearest

// Center-crop to square, resize to target_side (block average for integer
// ratios, bilinear otherwise), convert channels, normalize to [-1, 1].
Tensor decode_image(const ImageU8& img, int target_side, int channels);

// Denormalizes one example of a batch back to 8-bit.
ImageU8 encode_image(const Tensor& batch, int index);

struct LoadedDataset {
  Tensor images;
  std::vector<std::string> names;
  int skipped = 0;
};

// Loads every PNG in a directory (sorted by name). Unreadable files are
// skipped with a warning; an empty result is fatal.
LoadedDataset load_dataset(const std::string& dir, int target_side, int channels);

// Tiles a batch into one PNG, `cols` images per row (0 = near-square).
void save_image_grid(const std::string& path, const Tensor& batch, int cols = 0);

}  // namespace mgcd
