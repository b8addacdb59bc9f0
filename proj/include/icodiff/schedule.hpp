#pragma once

#include <cstddef>
#include <vector>

#include "icodiff/feature_map.hpp"

namespace icodiff {

/// Variance schedule of the forward chain. Step t runs 1..T; beta[t-1] is
/// beta_t and alpha_bar[t] is the product of (1 - beta_i) for i <= t, with
/// alpha_bar[0] = 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<double> sqrt_alpha_bar;
  std::vector<double> sqrt_one_minus_alpha_bar;
  std::vector<double> posterior_var;  // index t; posterior_var[0] unused (0)

  double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
};

inline constexpr int kDefaultSteps = 1000;
inline constexpr double kDefaultCosineOffset = 0.008;

// Cosine schedule: alpha_bar_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2).
// beta is clipped at 0.999 and alpha_bar recomputed from the clipped betas.
NoiseSchedule cosine_schedule(int steps = kDefaultSteps, double offset = kDefaultCosineOffset);

// sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps. t == 0 returns x0.
FeatureMap q_sample(const FeatureMap& x0, int t, const FeatureMap& eps, const NoiseSchedule& sched);

// sqrt(ab_t) * eps - sqrt(1 - ab_t) * x0.
FeatureMap v_target(const FeatureMap& x0, const FeatureMap& eps, int t, const NoiseSchedule& sched);

// sqrt(ab_t) * x_t - sqrt(1 - ab_t) * v, clamped to [-1, 1] when `clamp`.
FeatureMap predict_x0_from_v(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched,
                             bool clamp = true);

// sqrt(1 - ab_t) * x_t + sqrt(ab_t) * v.
FeatureMap predict_eps_from_v(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched);

}  // namespace icodiff
