#include "mgcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "mgcd/errors.hpp"
#include "mgcd/pyramid.hpp"

namespace mgcd {

float u8_to_unit(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

uint8_t unit_to_u8(float v) {
  const float scaled = (v + 1.0f) * 127.5f;
  const float clamped = std::min(255.0f, std::max(0.0f, scaled));
  return static_cast<uint8_t>(std::lround(clamped));
}

namespace {

// gray <-> rgb conversion on 8-bit data (rec. 601 luma)
float sample_channel(const ImageU8& img, int y, int x, int ch, int want_channels) {
  if (img.channels == want_channels) return img.at(y, x, ch);
  if (img.channels == 3 && want_channels == 1)
    return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
  return img.at(y, x, 0);  // gray replicated to rgb
}

}  // namespace

Tensor decode_image(const ImageU8& img, int target_side, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("decode_image: channels must be 1 or 3");
  if (img.width < 1 || img.height < 1) throw IoError("decode_image: empty image");

  // center crop to square
  const int side = std::min(img.width, img.height);
  const int y0 = (img.height - side) / 2;
  const int x0 = (img.width - side) / 2;

  Tensor out(1, channels, target_side, target_side);
  if (side % target_side == 0) {
    // integer ratio: block average
    const int f = side / target_side;
    for (int ch = 0; ch < channels; ++ch)
      for (int oy = 0; oy < target_side; ++oy)
        for (int ox = 0; ox < target_side; ++ox) {
          double s = 0;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx)
              s += sample_channel(img, y0 + oy * f + dy, x0 + ox * f + dx, ch, channels);
          out.at(0, ch, oy, ox) = static_cast<float>(s / (f * f) / 127.5 - 1.0);
        }
  } else {
    // bilinear
    const double scale = static_cast<double>(side) / target_side;
    for (int ch = 0; ch < channels; ++ch)
      for (int oy = 0; oy < target_side; ++oy)
        for (int ox = 0; ox < target_side; ++ox) {
          const double sy = (oy + 0.5) * scale - 0.5;
          const double sx = (ox + 0.5) * scale - 0.5;
          const int iy = std::max(0, std::min(side - 2, static_cast<int>(std::floor(sy))));
          const int ix = std::max(0, std::min(side - 2, static_cast<int>(std::floor(sx))));
          const double fy = std::min(1.0, std::max(0.0, sy - iy));
          const double fx = std::min(1.0, std::max(0.0, sx - ix));
          auto px = [&](int yy, int xx) {
            return static_cast<double>(sample_channel(img, y0 + yy, x0 + xx, ch, channels));
          };
          const double v = (1 - fy) * ((1 - fx) * px(iy, ix) + fx * px(iy, ix + 1)) +
                           fy * ((1 - fx) * px(iy + 1, ix) + fx * px(iy + 1, ix + 1));
          out.at(0, ch, oy, ox) = static_cast<float>(v / 127.5 - 1.0);
        }
  }
  return out;
}

ImageU8 encode_image(const Tensor& batch, int index) {
  if (index < 0 || index >= batch.n) throw ShapeError("encode_image: index out of range");
  if (batch.c != 1 && batch.c != 3) throw ShapeError("encode_image: channels must be 1 or 3");
  ImageU8 img;
  img.width = batch.w;
  img.height = batch.h;
  img.channels = batch.c;
  img.pixels.resize(static_cast<size_t>(batch.w) * batch.h * batch.c);
  for (int y = 0; y < batch.h; ++y)
    for (int x = 0; x < batch.w; ++x)
      for (int ch = 0; ch < batch.c; ++ch)
        img.pixels[(static_cast<size_t>(y) * batch.w + x) * batch.c + ch] =
            unit_to_u8(batch.at(index, ch, y, x));
  return img;
}

LoadedDataset load_dataset(const std::string& dir, int target_side, int channels) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir + " does not exist");

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());

  LoadedDataset out;
  std::vector<Tensor> decoded;
  for (const auto& f : files) {
    try {
      decoded.push_back(decode_image(read_png(f), target_side, channels));
      out.names.push_back(fs::path(f).filename().string());
    } catch (const IoError& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
      ++out.skipped;
    }
  }
  if (decoded.empty()) throw IoError("no readable PNG images in " + dir);

  out.images = Tensor(static_cast<int>(decoded.size()), channels, target_side, target_side);
  const size_t stride = static_cast<size_t>(channels) * target_side * target_side;
  for (size_t i = 0; i < decoded.size(); ++i)
    std::copy(decoded[i].data.begin(), decoded[i].data.end(),
              out.images.data.begin() + i * stride);
  return out;
}

void save_image_grid(const std::string& path, const Tensor& batch, int cols) {
  if (batch.n < 1) throw ShapeError("save_image_grid: empty batch");
  if (cols <= 0) cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(batch.n))));
  const int rows = (batch.n + cols - 1) / cols;
  const int pad = 2;

  ImageU8 canvas;
  canvas.channels = batch.c;
  canvas.width = cols * batch.w + (cols + 1) * pad;
  canvas.height = rows * batch.h + (rows + 1) * pad;
  canvas.pixels.assign(static_cast<size_t>(canvas.width) * canvas.height * canvas.channels, 32);

  for (int i = 0; i < batch.n; ++i) {
    const int gy = i / cols, gx = i % cols;
    const int oy = pad + gy * (batch.h + pad);
    const int ox = pad + gx * (batch.w + pad);
    for (int y = 0; y < batch.h; ++y)
      for (int x = 0; x < batch.w; ++x)
        for (int ch = 0; ch < batch.c; ++ch)
          canvas.pixels[(static_cast<size_t>(oy + y) * canvas.width + ox + x) * canvas.channels +
                        ch] = unit_to_u8(batch.at(i, ch, y, x));
  }
  write_png(path, canvas);
}

}  // namespace mgcd
