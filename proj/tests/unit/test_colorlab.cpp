#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "priorforge/colorlab.hpp"
#include "priorforge/common.hpp"
#include "priorforge/raster.hpp"

using namespace priorforge;
using namespace priorforge::colorlab;

namespace {

ColorHistogram hist(std::vector<double> v) {
  ColorHistogram h;
  h.layout = {static_cast<int>(v.size()), 1, 1};
  h.values = std::move(v);
  return h;
}

}  // namespace

// Reference values from skimage.color.rgb2lab (D65, 2 degree observer).
TEST_CASE("sRGB to LAB matches the reference converter") {
  struct Case {
    std::array<double, 3> rgb;
    double L, a, b;
  };
  const Case cases[] = {
      {{1, 0, 0}, 53.240588, 80.092308, 67.202751},
      {{0, 1, 0}, 87.735099, -86.183030, 83.179703},
      {{0, 0, 1}, 32.295673, 79.185591, -107.857300},
      {{1, 1, 1}, 100.000000, -0.002455, 0.004653},
      {{0, 0, 0}, 0.0, 0.0, 0.0},
      {{0.5, 0.5, 0.5}, 53.388965, -0.001468, 0.002784},
      {{0.2, 0.4, 0.6}, 42.008001, -0.154041, -32.842897},
      {{1, 0.5, 0}, 66.956545, 43.071302, 73.959202},
      {{0.04045, 0.5, 0.9}, 53.011412, 9.483458, -59.492906},
  };
  for (const auto& c : cases) {
    const Lab lab = srgb_to_lab(c.rgb);
    CHECK(std::abs(lab.L - c.L) < 0.05);
    CHECK(std::abs(lab.a - c.a) < 0.05);
    CHECK(std::abs(lab.b - c.b) < 0.05);
  }
}

TEST_CASE("out-of-range channels are rejected") {
  CHECK_THROWS_AS(srgb_to_lab({1.2, 0, 0}), InputError);
  CHECK_THROWS_AS(srgb_to_lab({0, -0.1, 0}), InputError);
  CHECK_THROWS_AS(srgb_to_lab({0, NAN, 0}), InputError);
}

TEST_CASE("histograms are normalized and land in the expected bin") {
  RasterPatch red(4, 4, {1, 0, 0});
  const auto h = lab_histogram(red);
  CHECK(h.values.size() == 64);
  CHECK(h.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const int bin = h.layout.bin_of(srgb_to_lab({1, 0, 0}));
  CHECK(h.values[bin] == doctest::Approx(1.0));

  RasterPatch two(2, 2, {1, 1, 1});
  two.set(0, 0, {0, 0, 0});
  const auto h2 = lab_histogram(two, HistogramLayout::full_scale());
  CHECK(h2.values.size() == 720);
  CHECK(h2.values[h2.layout.bin_of(srgb_to_lab({0, 0, 0}))] == doctest::Approx(0.25));
}

TEST_CASE("Hellinger distance") {
  CHECK(hellinger(hist({0.5, 0.5, 0, 0}), hist({0.5, 0.5, 0, 0})) == 0.0);
  CHECK(hellinger(hist({1, 0}), hist({0, 1})) == doctest::Approx(1.0).epsilon(1e-12));
  // 1 - sqrt(1/8) - sqrt(1/8) = 1 - 1/sqrt(2)
  CHECK(std::abs(hellinger(hist({0.5, 0.5, 0, 0}), hist({0.25, 0.25, 0.25, 0.25})) -
                 0.541196100146197) < 1e-9);
  CHECK(std::abs(hellinger(hist({0.7, 0.2, 0.1}), hist({0.1, 0.3, 0.6})) - 0.4955067308694257) <
        1e-9);
  const auto a = hist({0.1, 0.6, 0.3});
  const auto b = hist({0.3, 0.3, 0.4});
  CHECK(hellinger(a, b) == doctest::Approx(hellinger(b, a)));
  CHECK_THROWS_AS(hellinger(hist({1, 0}), hist({1, 0, 0})), InputError);
}

TEST_CASE("KL divergence with epsilon smoothing") {
  CHECK(std::abs(kl_divergence(hist({0.2, 0.8}), hist({0.2, 0.8}))) < 1e-12);
  // Reference from scipy.stats.entropy on the smoothed, renormalized inputs.
  CHECK(std::abs(kl_divergence(hist({0.5, 0.5, 0, 0}), hist({0.25, 0.25, 0.25, 0.25})) -
                 0.6931468060092885) < 1e-6);
  CHECK(std::abs(kl_divergence(hist({0.7, 0.2, 0.1}), hist({0.1, 0.3, 0.6})) -
                 1.1018680518917647) < 1e-6);
  CHECK(std::isfinite(kl_divergence(hist({1, 0}), hist({0, 1}))));
}

TEST_CASE("color token is sqrt of the histogram, zero padded") {
  const auto h = hist({0.25, 0.0, 0.75});
  const auto tok = make_color_token(h, 5);
  REQUIRE(tok.size() == 5);
  CHECK(tok[0] == doctest::Approx(0.5));
  CHECK(tok[1] == 0.0);
  CHECK(tok[2] == doctest::Approx(std::sqrt(0.75)));
  CHECK(tok[3] == 0.0);
  CHECK(tok[4] == 0.0);
  double norm2 = 0;
  for (double v : tok) norm2 += v * v;
  CHECK(norm2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(make_color_token(h, 2), InputError);
}
