#include "priorforge/colorlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "priorforge/raster.hpp"

namespace priorforge::colorlab {

namespace {

constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.00000;
constexpr double kWhiteZ = 1.08883;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t)
                                   : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

int axis_bin(double v, double lo, double hi, int n) {
  const int i = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
  return std::clamp(i, 0, n - 1);
}

void require_same_layout(const ColorHistogram& h1, const ColorHistogram& h2) {
  if (!(h1.layout == h2.layout) || h1.values.size() != h2.values.size())
    throw InputError("histogram layouts differ");
}

}  // namespace

Lab srgb_to_lab(const std::array<double, 3>& rgb) {
  for (double c : rgb)
    if (!(c >= 0.0 && c <= 1.0))
      throw InputError("sRGB components must lie in [0,1]");
  const double r = srgb_to_linear(rgb[0]);
  const double g = srgb_to_linear(rgb[1]);
  const double b = srgb_to_linear(rgb[2]);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kWhiteX);
  const double fy = lab_f(y / kWhiteY);
  const double fz = lab_f(z / kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

int HistogramLayout::bin_of(const Lab& lab) const {
  const int l = axis_bin(lab.L, L_min, L_max, nL);
  const int a = axis_bin(lab.a, a_min, a_max, nA);
  const int b = axis_bin(lab.b, b_min, b_max, nB);
  return (l * nA + a) * nB + b;
}

double ColorHistogram::sum() const {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

ColorHistogram lab_histogram(const RasterPatch& patch,
                             const HistogramLayout& layout) {
  if (patch.pixel_count() == 0) throw InputError("empty patch");
  ColorHistogram h{layout, std::vector<double>(layout.size(), 0.0)};
  std::vector<std::size_t> counts(layout.size(), 0);
  for (std::size_t i = 0; i < patch.pixel_count(); ++i)
    ++counts[layout.bin_of(srgb_to_lab(patch.pixel(i)))];
  const double n = static_cast<double>(patch.pixel_count());
  for (std::size_t k = 0; k < counts.size(); ++k) h.values[k] = counts[k] / n;
  return h;
}

std::vector<double> make_color_token(const ColorHistogram& hist, int width) {
  const int bins = static_cast<int>(hist.values.size());
  if (width < bins)
    throw InputError("color token width " + std::to_string(width) +
                     " is smaller than the bin count " + std::to_string(bins));
  std::vector<double> token(width, 0.0);
  for (int i = 0; i < bins; ++i) token[i] = std::sqrt(std::max(hist.values[i], 0.0));
  return token;
}

double hellinger(const ColorHistogram& h1, const ColorHistogram& h2) {
  require_same_layout(h1, h2);
  // Equal to sqrt(1 - sum sqrt(p q)) for normalized inputs, but exactly 0
  // when the histograms are equal.
  double ss = 0.0;
  for (std::size_t i = 0; i < h1.values.size(); ++i) {
    const double d = std::sqrt(std::max(h1.values[i], 0.0)) -
                     std::sqrt(std::max(h2.values[i], 0.0));
    ss += d * d;
  }
  return std::clamp(std::sqrt(0.5 * ss), 0.0, 1.0);
}

double kl_divergence(const ColorHistogram& h1, const ColorHistogram& h2,
                     double eps) {
  require_same_layout(h1, h2);
  const double n = static_cast<double>(h1.values.size());
  const double z1 = h1.sum() + eps * n;
  const double z2 = h2.sum() + eps * n;
  double kl = 0.0;
  for (std::size_t i = 0; i < h1.values.size(); ++i) {
    const double p = (h1.values[i] + eps) / z1;
    const double q = (h2.values[i] + eps) / z2;
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

}  // namespace priorforge::colorlab
