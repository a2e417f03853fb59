#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fgvc {

/// 8-bit image, row-major, channels interleaved.
struct Image {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int rows_, int cols_, int channels_, std::uint8_t fill = 0)
      : rows(rows_), cols(cols_), channels(channels_),
        pixels(static_cast<std::size_t>(rows_) * cols_ * channels_, fill) {}

  std::uint8_t& at(int r, int c, int ch = 0) { return pixels[(static_cast<std::size_t>(r) * cols + c) * channels + ch]; }
  std::uint8_t at(int r, int c, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Grayscale (1 channel) or RGB (3 channels) 8-bit PNG.
void write_png(const Image& image, const std::filesystem::path& path);

/// Reads gray, gray+alpha, RGB or RGBA 8/16-bit PNGs. Alpha is dropped and
/// 16-bit samples are reduced to 8 bits.
Image read_png(const std::filesystem::path& path);

}  // namespace fgvc
