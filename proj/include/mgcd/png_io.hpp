#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgcd/tensor.hpp"

namespace mgcd {

// 8-bit interleaved image, channels 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Reads an 8-bit PNG; palette/16-bit/alpha inputs are normalized to 8-bit
// gray or RGB.
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

// Serializes a binary 1x1xHxW mask as a 1-bit grayscale PNG.
void write_mask_png(const std::string& path, const Tensor& mask);
Tensor read_mask_png(const std::string& path);

}  // namespace mgcd
