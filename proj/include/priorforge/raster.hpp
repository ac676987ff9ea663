#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace priorforge {

/// H x W x 3 sRGB image, channel values in [0,1], row-major interleaved.
struct RasterPatch {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  RasterPatch() = default;
  RasterPatch(int h, int w, std::array<double, 3> fill = {0, 0, 0});

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::array<double, 3> at(int y, int x) const {
    const std::size_t o = 3 * (static_cast<std::size_t>(y) * width + x);
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
  }
  void set(int y, int x, const std::array<double, 3>& c) {
    const std::size_t o = 3 * (static_cast<std::size_t>(y) * width + x);
    pixels[o] = c[0];
    pixels[o + 1] = c[1];
    pixels[o + 2] = c[2];
  }
  std::array<double, 3> pixel(std::size_t i) const {
    return {pixels[3 * i], pixels[3 * i + 1], pixels[3 * i + 2]};
  }
};

/// Binary PPM (P6, maxval 255). Channels are rounded to the nearest byte.
std::vector<unsigned char> encode_ppm(const RasterPatch& patch);
RasterPatch decode_ppm(const std::vector<unsigned char>& bytes);
void write_ppm(const std::string& path, const RasterPatch& patch);
RasterPatch read_ppm(const std::string& path);

}  // namespace priorforge
