#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glf {

/// Single 8-bit luma plane, row-major.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
  std::size_t pixel_count() const { return pixels.size(); }

  bool operator==(const Frame&) const = default;
};

/// Binary PGM ("P5", maxval 255). Parse errors report the byte offset.
Frame load_pgm(const std::string& path);
void save_pgm(const Frame& frame, const std::string& path);

/// Y plane of frame `index` from a raw planar 8-bit 4:2:0 file.
Frame load_yuv420_luma(const std::string& path, int width, int height, int index);

}  // namespace glf
