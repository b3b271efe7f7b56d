#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wsod {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
};

// 8-bit RGB raster, interleaved, used for the analysis plots.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

  void set(std::size_t row, std::size_t col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = &pixels[(row * width + col) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

// Minimal PNG codec built on zlib: bit depth 8, color type 0 (gray) or 2
// (RGB), no interlace, filter 0 on write (all five filters accepted on read).
// Output bytes are a pure function of the pixel data.
void write_png(const std::string& path, const GrayImage& image);
void write_png(const std::string& path, const RgbImage& image);
GrayImage read_png_gray(const std::string& path);

}  // namespace wsod
