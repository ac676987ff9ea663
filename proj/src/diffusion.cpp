#include "priorforge/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace priorforge::diffusion {

const char* schedule_name(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw InputError("unknown schedule kind '" + name + "'");
}

double NoiseSchedule::signal(int t) const {
  check_t(t);
  return std::sqrt(alpha_bar[t]);
}

double NoiseSchedule::noise(int t) const {
  check_t(t);
  return std::sqrt(1.0 - alpha_bar[t]);
}

void NoiseSchedule::check_t(int t) const {
  if (t < 0 || t > T)
    throw InputError("timestep " + std::to_string(t) + " outside [0, " +
                     std::to_string(T) + "]");
}

NoiseSchedule make_cosine_schedule(int T, double s) {
  if (T < 1) throw InputError("schedule needs T >= 1");
  if (!(s >= 0)) throw InputError("cosine offset must be >= 0");
  constexpr double kHalfPi = 1.5707963267948966;
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / T + s) / (1.0 + s) * kHalfPi);
    return c * c;
  };
  NoiseSchedule sched{ScheduleKind::cosine, T, std::vector<double>(T + 1, 1.0)};
  sched.cosine_s = s;
  for (int t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - beta);
  }
  return sched;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw InputError("schedule needs T >= 1");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
    throw InputError("linear schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule sched{ScheduleKind::linear, T, std::vector<double>(T + 1, 1.0)};
  sched.beta_start = beta_start;
  sched.beta_end = beta_end;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - beta);
  }
  return sched;
}

NoiseSchedule make_schedule(ScheduleKind kind, int T) {
  return kind == ScheduleKind::linear ? make_linear_schedule(T)
                                      : make_cosine_schedule(T);
}

Vec forward_diffuse(const NoiseSchedule& s, const Vec& z0, int t, const Vec& eps) {
  s.check_t(t);
  if (z0.size() != eps.size()) throw InputError("z0 and eps dimensions differ");
  if (!eps.allFinite()) throw InputError("eps must be finite");
  return s.signal(t) * z0 + s.noise(t) * eps;
}

Vec cfg_combine(const Vec& pred_uncond, const Vec& pred_cond, double scale) {
  if (pred_uncond.size() != pred_cond.size())
    throw InputError("guidance arms have different dimensions");
  return pred_uncond + scale * (pred_cond - pred_uncond);
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (T < 1) throw InputError("T must be >= 1");
  if (steps < 1 || steps > T)
    throw InputError("DDIM steps must lie in [1, T]");
  std::vector<int> ts(steps);
  for (int i = 0; i < steps; ++i)
    ts[i] = T - static_cast<int>((static_cast<long long>(i) * T) / steps);
  return ts;
}

Vec ddim_step(const NoiseSchedule& s, const Vec& z_t, const Vec& z0_hat, int t,
              int t_prev) {
  if (t <= t_prev) throw InputError("DDIM step requires t > t_prev");
  s.check_t(t);
  s.check_t(t_prev);
  if (z_t.size() != z0_hat.size()) throw InputError("dimension mismatch in ddim_step");
  const Vec eps_hat = (z_t - s.signal(t) * z0_hat) / s.noise(t);
  return s.signal(t_prev) * z0_hat + s.noise(t_prev) * eps_hat;
}

}  // namespace priorforge::diffusion
