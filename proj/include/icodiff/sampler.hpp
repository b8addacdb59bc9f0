#pragma once

#include <cstdint>
#include <vector>

#include "icodiff/denoiser.hpp"
#include "icodiff/rng.hpp"
#include "icodiff/schedule.hpp"

namespace icodiff {

struct SamplerConfig {
  int t_noise = 500;
  int n_samples = 10;
  std::uint64_t rng_seed = 0;
  // false: every reverse step returns its posterior mean (no injected noise).
  bool stochastic = true;

  void validate(const NoiseSchedule& sched) const;
};

// Per-subject conditioning shared by every sample of that subject.
struct Conditioning {
  FeatureMap mask;
  double age_scaled = 0.0;
  int gender = 0;
};

// One ancestral step with fixed posterior variance:
//   x0_hat = clamp(sqrt(ab_t) x_t - sqrt(1 - ab_t) v_hat, -1, 1)
//   mean   = beta_t sqrt(ab_{t-1}) / (1 - ab_t) * x0_hat
//          + (1 - ab_{t-1}) sqrt(1 - beta_t) / (1 - ab_t) * x_t
// plus sqrt(posterior_var_t) * z when t > 1 and rng is non-null.
FeatureMap reverse_step(const FeatureMap& x_t, const FeatureMap& v_hat, int t, const NoiseSchedule& sched,
                        RandomStream* rng);

// Stream ids used by the samplers. Each (sample, step) pair owns a stream,
// so samples are reproducible regardless of evaluation order.
std::uint64_t start_noise_stream(int sample);
std::uint64_t step_noise_stream(int sample, int t);

// Pure-noise generation: x_T ~ N(0, I), then reverse steps T..1.
FeatureMap sample_from_noise(const Conditioning& cond, const DenoiserParams& params, const NoiseSchedule& sched,
                             std::uint64_t seed, bool stochastic = true, int sample = 0);

// Partial-noise reconstruction: for each sample, noise x0_obs to t_noise and
// denoise back to 0. Samples run on up to `workers` threads.
std::vector<FeatureMap> reconstruct(const FeatureMap& x0_obs, const Conditioning& cond, const DenoiserParams& params,
                                    const NoiseSchedule& sched, const SamplerConfig& cfg, int workers = 1);

}  // namespace icodiff
