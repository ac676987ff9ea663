#include "priorforge/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "priorforge/common.hpp"
#include "priorforge/io.hpp"

namespace priorforge {

RasterPatch::RasterPatch(int h, int w, std::array<double, 3> fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

std::vector<unsigned char> encode_ppm(const RasterPatch& patch) {
  const std::string header = "P6\n" + std::to_string(patch.width) + " " +
                             std::to_string(patch.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + patch.pixels.size());
  for (double v : patch.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<unsigned char>(std::lround(c * 255.0)));
  }
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping # comments.
std::string next_token(const std::vector<unsigned char>& b, std::size_t& pos) {
  std::string tok;
  while (pos < b.size()) {
    const char c = static_cast<char>(b[pos]);
    if (c == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos])))
    tok.push_back(static_cast<char>(b[pos++]));
  return tok;
}

}  // namespace

RasterPatch decode_ppm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw InputError("not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw InputError("malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255)
    throw InputError("unsupported PPM geometry or maxval");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + need) throw InputError("truncated PPM payload");
  RasterPatch p(h, w);
  for (std::size_t i = 0; i < need; ++i) p.pixels[i] = bytes[pos + i] / 255.0;
  return p;
}

void write_ppm(const std::string& path, const RasterPatch& patch) {
  io::write_file_atomic(path, encode_ppm(patch));
}

RasterPatch read_ppm(const std::string& path) {
  return decode_ppm(io::read_file(path));
}

}  // namespace priorforge
