#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "priorforge/diffusion.hpp"

using namespace priorforge;
using namespace priorforge::diffusion;

// numpy: prod(1 - linspace(1e-4, 0.02, 1000)[:n]) and the telescoped cosine
// ratio f(t)/f(0) with f(t) = cos^2((t/T + s)/(1 + s) * pi/2).
TEST_CASE("schedule values match closed forms") {
  const auto lin = make_linear_schedule(1000);
  CHECK(lin.alpha_bar[0] == 1.0);
  CHECK(lin.alpha_bar[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-14));
  CHECK(std::abs(lin.alpha_bar[500] - 0.07858724288177824) < 1e-12);
  CHECK(std::abs(lin.alpha_bar[1000] - 4.035829765375676e-05) < 1e-14);

  const auto cos = make_cosine_schedule(1000);
  CHECK(cos.alpha_bar[0] == 1.0);
  CHECK(std::abs(cos.alpha_bar[250] - 0.8470121613269047) < 1e-12);
  CHECK(std::abs(cos.alpha_bar[500] - 0.49384359044063775) < 1e-12);
  CHECK(cos.alpha_bar[1000] < 1e-6);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(cos.alpha_bar[t] < cos.alpha_bar[t - 1]);
    CHECK(lin.alpha_bar[t] < lin.alpha_bar[t - 1]);
    // beta never exceeds the 0.999 clip
    CHECK(1.0 - cos.alpha_bar[t] / cos.alpha_bar[t - 1] <= 0.999 + 1e-12);
  }
  CHECK(cos.signal(500) == doctest::Approx(std::sqrt(cos.alpha_bar[500])));
  CHECK(cos.noise(500) == doctest::Approx(std::sqrt(1 - cos.alpha_bar[500])));
  CHECK_THROWS_AS(cos.check_t(1001), InputError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.5, 0.1), InputError);
  CHECK(parse_schedule(schedule_name(ScheduleKind::linear)) == ScheduleKind::linear);
  CHECK_THROWS_AS(parse_schedule("sigmoid"), InputError);
}

TEST_CASE("DDIM timesteps") {
  const auto ts = ddim_timesteps(1000, 100);
  REQUIRE(ts.size() == 100);
  CHECK(ts[0] == 1000);
  CHECK(ts[1] == 990);
  CHECK(ts.back() == 10);
  CHECK(ddim_timesteps(1000, 3) == std::vector<int>{1000, 667, 334});
  CHECK(ddim_timesteps(5, 5) == std::vector<int>{5, 4, 3, 2, 1});
  CHECK_THROWS_AS(ddim_timesteps(10, 11), InputError);
  CHECK_THROWS_AS(ddim_timesteps(10, 0), InputError);
}

TEST_CASE("forward diffusion and DDIM reverse step are consistent") {
  const auto s = make_cosine_schedule(1000);
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const Vec z0 = gaussian_vec(rng, 8);
    const Vec eps = gaussian_vec(rng, 8);
    const int t = 2 + static_cast<int>(rng() % 998);
    const int tp = static_cast<int>(rng() % static_cast<std::uint64_t>(t));
    const Vec zt = forward_diffuse(s, z0, t, eps);
    const Vec expect = forward_diffuse(s, z0, tp, eps);
    CHECK((ddim_step(s, zt, z0, t, tp) - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(ddim_step(s, Vec::Ones(3), Vec::Constant(3, 2.0), 10, 0) == Vec::Constant(3, 2.0));
  CHECK_THROWS_AS(ddim_step(s, Vec::Ones(3), Vec::Ones(3), 5, 5), InputError);
  CHECK_THROWS_AS(forward_diffuse(s, Vec::Ones(3), 5, Vec::Ones(2)), InputError);
}

TEST_CASE("CFG combine") {
  const Vec u = Vec::LinSpaced(4, -1, 1);
  const Vec c = Vec::LinSpaced(4, 2, 5);
  CHECK(cfg_combine(u, c, 0.0) == u);
  CHECK(cfg_combine(u, c, 1.0) == c);
  const Vec g = cfg_combine(u, c, 3.0);
  CHECK(((g - u) - 3.0 * (c - u)).norm() < 1e-12);
  CHECK_THROWS_AS(cfg_combine(u, Vec::Ones(3), 2.0), InputError);
}
