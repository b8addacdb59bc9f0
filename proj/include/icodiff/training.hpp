#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "icodiff/denoiser.hpp"
#include "icodiff/schedule.hpp"

namespace icodiff {

struct OptimizerConfig {
  double lr0 = 1e-5;
  double lr_min = 1e-7;
  int epochs = 1000;
  int batch_size = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Cosine annealing from lr0 at step 0 to lr_min at total_steps.
double cosine_lr(const OptimizerConfig& cfg, long step, long total_steps);

/// Adam with bias correction. Parameters are rounded back to float after
/// each update so they always match their f32 checkpoint image.
class Adam {
 public:
  Adam(const DenoiserParams& params, OptimizerConfig cfg);
  void step(DenoiserParams& params, const std::vector<nn::Mat>& grads, double lr);
  long steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<nn::Mat> m_;
  std::vector<nn::Mat> v_;
  long t_ = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double seconds = 0.0;
  double lr = 0.0;  // at the last step of the epoch
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains `params` in place on `items`. Each epoch shuffles the items, and
/// every item draws t uniformly in [1, T] plus fresh noise; all randomness
/// comes from `seed`, so a run is reproducible for a fixed worker count or
/// any worker count (per-item gradients are reduced in batch order).
std::vector<EpochStats> train(DenoiserParams& params, const std::vector<TrainingItem>& items,
                              const NoiseSchedule& sched, const OptimizerConfig& cfg, std::uint64_t seed,
                              int workers = 1, const EpochCallback& on_epoch = {});

}  // namespace icodiff
