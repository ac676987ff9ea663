#pragma once

#include <array>
#include <vector>

#include "priorforge/common.hpp"

namespace priorforge {

struct RasterPatch;

namespace colorlab {

struct Lab {
  double L = 0, a = 0, b = 0;
};

/// sRGB (components in [0,1]) -> CIELAB under D65. Throws InputError for
/// components outside [0,1].
Lab srgb_to_lab(const std::array<double, 3>& rgb);

struct HistogramLayout {
  int nL = 4, nA = 4, nB = 4;
  double L_min = 0.0, L_max = 100.0;
  double a_min = -128.0, a_max = 128.0;
  double b_min = -128.0, b_max = 128.0;

  static HistogramLayout full_scale() { return {10, 8, 9}; }
  int size() const { return nL * nA * nB; }
  int bin_of(const Lab& lab) const;
  bool operator==(const HistogramLayout&) const = default;
};

/// Normalized 3-D LAB histogram, flattened L-major (index = (l*nA + a)*nB + b).
struct ColorHistogram {
  HistogramLayout layout;
  std::vector<double> values;

  double sum() const;
};

ColorHistogram lab_histogram(const RasterPatch& patch,
                             const HistogramLayout& layout = {});

/// Element-wise sqrt of the histogram followed by zero padding up to width.
std::vector<double> make_color_token(const ColorHistogram& hist, int width);

double hellinger(const ColorHistogram& h1, const ColorHistogram& h2);

/// KL(h1 || h2) after adding eps to every bin of both and renormalizing.
double kl_divergence(const ColorHistogram& h1, const ColorHistogram& h2,
                     double eps = 1e-8);

}  // namespace colorlab
}  // namespace priorforge
