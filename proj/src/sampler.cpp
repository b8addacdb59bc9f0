#include "icodiff/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "icodiff/errors.hpp"
#include "icodiff/parallel.hpp"

namespace icodiff {

void SamplerConfig::validate(const NoiseSchedule& sched) const {
  if (t_noise < 1 || t_noise > sched.steps)
    throw std::invalid_argument("sampler.t_noise must be in [1, " + std::to_string(sched.steps) + "]");
  if (n_samples < 1) throw std::invalid_argument("sampler.n_samples must be >= 1");
}

FeatureMap reverse_step(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched,
                        RandomStream* rng) {
  if (t < 1 || t > sched.steps) throw std::out_of_range("reverse_step: timestep outside [1, T]");
  const FeatureMap x0_hat = predict_x0_from_v(x_t, v_hat, t, sched, true);
  const auto ti = static_cast<std::size_t>(t);
  const double beta = sched.beta[ti - 1];
  const double ab = sched.alpha_bar[ti];
  const double ab_prev = sched.alpha_bar[ti - 1];
  const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
  const double ct = (1.0 - ab_prev) * std::sqrt(1.0 - beta) / (1.0 - ab);
  const double sd = std::sqrt(sched.posterior_var[ti]);
  const bool noisy = t > 1 && rng != nullptr;

  FeatureMap out(x_t.order(), x_t.channels());
  auto o = out.data();
  auto x0 = x0_hat.data();
  auto x = x_t.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double y = c0 * x0[i] + ct * x[i];
    if (noisy) y += sd * rng->normal();
    o[i] = static_cast<float>(y);
  }
  return out;
}

std::uint64_t start_noise_stream(int sample) { return mix_ids({0x5747ull, static_cast<std::uint64_t>(sample)}); }

std::uint64_t step_noise_stream(int sample, int t) {
  return mix_ids({0x57e9ull, static_cast<std::uint64_t>(sample), static_cast<std::uint64_t>(t)});
}

namespace {

FeatureMap denoise_from(FeatureMap x, int t_start, const Conditioning& cond, const DenoiserParams& params,
                        const NoiseSchedule& sched, std::uint64_t seed, bool stochastic, int sample) {
  for (int t = t_start; t >= 1; --t) {
    const FeatureMap v_hat = denoiser_forward({x, cond.mask, t, cond.age_scaled, cond.gender}, params);
    RandomStream rng(seed, step_noise_stream(sample, t));
    x = reverse_step(x, v_hat, t, sched, stochastic ? &rng : nullptr);
    if (!x.all_finite())
      throw NumericalFault("non-finite sampler state at step " + std::to_string(t) + " of sample " +
                           std::to_string(sample));
  }
  return x;
}

}  // namespace

FeatureMap sample_from_noise(const Conditioning& cond, const DenoiserParams& params, const NoiseSchedule& sched,
                             std::uint64_t seed, bool stochastic, int sample) {
  const auto& cfg = params.config();
  FeatureMap x(cfg.base_order, static_cast<std::size_t>(cfg.out_channels));
  RandomStream rng(seed, start_noise_stream(sample));
  rng.fill_normal(x.data());
  return denoise_from(std::move(x), sched.steps, cond, params, sched, seed, stochastic, sample);
}

std::vector<FeatureMap> reconstruct(const FeatureMap& x0_obs, const Conditioning& cond, const DenoiserParams& params,
                                    const NoiseSchedule& sched, const SamplerConfig& cfg, int workers) {
  cfg.validate(sched);
  std::vector<FeatureMap> out(static_cast<std::size_t>(cfg.n_samples));
  parallel_for(out.size(), workers, [&](std::size_t j) {
    const int sample = static_cast<int>(j);
    FeatureMap eps(x0_obs.order(), x0_obs.channels());
    RandomStream rng(cfg.rng_seed, start_noise_stream(sample));
    rng.fill_normal(eps.data());
    out[j] = denoise_from(q_sample(x0_obs, cfg.t_noise, eps, sched), cfg.t_noise, cond, params, sched, cfg.rng_seed,
                          cfg.stochastic, sample);
  });
  return out;
}

}  // namespace icodiff
