#include "icodiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "icodiff/errors.hpp"

namespace icodiff {
namespace {

void check_step(int t, const NoiseSchedule& sched, int lowest) {
  if (t < lowest || t > sched.steps)
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " +
                            std::to_string(sched.steps) + "]");
}

}  // namespace

NoiseSchedule cosine_schedule(int steps, double offset) {
  if (steps < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
  if (!(offset > 0.0) || !std::isfinite(offset)) throw std::invalid_argument("cosine_schedule: s must be > 0");

  const auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);

  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<std::size_t>(steps));
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double cur = f(t) / f0;
    s.beta[static_cast<std::size_t>(t - 1)] = std::min(1.0 - cur / prev, 0.999);
    prev = cur;
  }

  const auto n = static_cast<std::size_t>(steps) + 1;
  s.alpha_bar.assign(n, 1.0);
  for (std::size_t t = 1; t < n; ++t) s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t - 1]);
  s.sqrt_alpha_bar.resize(n);
  s.sqrt_one_minus_alpha_bar.resize(n);
  s.posterior_var.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    s.sqrt_alpha_bar[t] = std::sqrt(s.alpha_bar[t]);
    s.sqrt_one_minus_alpha_bar[t] = std::sqrt(1.0 - s.alpha_bar[t]);
  }
  for (std::size_t t = 1; t < n; ++t)
    s.posterior_var[t] = s.beta[t - 1] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
  return s;
}

FeatureMap q_sample(const FeatureMap& x0, int t, const FeatureMap& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  check_step(t, sched, 0);
  if (t == 0) return x0;
  const double a = sched.sqrt_alpha_bar[static_cast<std::size_t>(t)];
  const double b = sched.sqrt_one_minus_alpha_bar[static_cast<std::size_t>(t)];
  FeatureMap out(x0.order(), x0.channels());
  auto o = out.data();
  auto x = x0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(a * x[i] + b * e[i]);
  return out;
}

FeatureMap v_target(const FeatureMap& x0, const FeatureMap& eps, int t, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "v_target");
  check_step(t, sched, 0);
  const double a = sched.sqrt_alpha_bar[static_cast<std::size_t>(t)];
  const double b = sched.sqrt_one_minus_alpha_bar[static_cast<std::size_t>(t)];
  FeatureMap out(x0.order(), x0.channels());
  auto o = out.data();
  auto x = x0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(a * e[i] - b * x[i]);
  return out;
}

FeatureMap predict_x0_from_v(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched,
                             bool clamp) {
  require_same_shape(x_t, v_hat, "predict_x0_from_v");
  check_step(t, sched, 0);
  const double a = sched.sqrt_alpha_bar[static_cast<std::size_t>(t)];
  const double b = sched.sqrt_one_minus_alpha_bar[static_cast<std::size_t>(t)];
  FeatureMap out(x_t.order(), x_t.channels());
  auto o = out.data();
  auto x = x_t.data();
  auto v = v_hat.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double y = a * x[i] - b * v[i];
    if (clamp) y = std::clamp(y, -1.0, 1.0);
    o[i] = static_cast<float>(y);
  }
  return out;
}

FeatureMap predict_eps_from_v(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched) {
  require_same_shape(x_t, v_hat, "predict_eps_from_v");
  check_step(t, sched, 0);
  const double a = sched.sqrt_alpha_bar[static_cast<std::size_t>(t)];
  const double b = sched.sqrt_one_minus_alpha_bar[static_cast<std::size_t>(t)];
  FeatureMap out(x_t.order(), x_t.channels());
  auto o = out.data();
  auto x = x_t.data();
  auto v = v_hat.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(b * x[i] + a * v[i]);
  return out;
}

}  // namespace icodiff
