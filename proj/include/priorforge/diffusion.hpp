#pragma once

#include <string>
#include <vector>

#include "priorforge/common.hpp"

namespace priorforge::diffusion {

enum class ScheduleKind { linear, cosine };

const char* schedule_name(ScheduleKind k);
ScheduleKind parse_schedule(const std::string& name);

/// Cumulative signal coefficients alpha_bar[0..T], alpha_bar[0] = 1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int T = 0;
  std::vector<double> alpha_bar;
  // Construction parameters, echoed into model files.
  double cosine_s = 0.008;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  double signal(int t) const;  // sqrt(alpha_bar[t])
  double noise(int t) const;   // sqrt(1 - alpha_bar[t])
  void check_t(int t) const;
};

NoiseSchedule make_cosine_schedule(int T, double s = 0.008);
NoiseSchedule make_linear_schedule(int T = 1000, double beta_start = 1e-4,
                                   double beta_end = 0.02);
NoiseSchedule make_schedule(ScheduleKind kind, int T);

Vec forward_diffuse(const NoiseSchedule& s, const Vec& z0, int t, const Vec& eps);

/// pred_uncond + scale * (pred_cond - pred_uncond)
Vec cfg_combine(const Vec& pred_uncond, const Vec& pred_cond, double scale);

/// Evenly spaced descending timesteps starting at T; all entries > 0. The
/// sampler's last transition goes from the final entry to t = 0.
std::vector<int> ddim_timesteps(int T, int steps);

/// Deterministic (eta = 0) DDIM update in the x0 parameterization.
Vec ddim_step(const NoiseSchedule& s, const Vec& z_t, const Vec& z0_hat, int t,
              int t_prev);

}  // namespace priorforge::diffusion
