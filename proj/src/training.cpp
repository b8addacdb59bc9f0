#include "icodiff/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "icodiff/rng.hpp"

namespace icodiff {

void OptimizerConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("optimizer.lr0: must be > 0");
  if (!(lr_min >= 0.0) || lr_min > lr0) throw std::invalid_argument("optimizer.lr_min: must be in [0, lr0]");
  if (epochs < 1) throw std::invalid_argument("optimizer.epochs: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("optimizer.batch_size: must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer.beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer.beta2: must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer.eps: must be > 0");
}

double cosine_lr(const OptimizerConfig& cfg, long step, long total_steps) {
  if (total_steps <= 0) return cfg.lr0;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

Adam::Adam(const DenoiserParams& params, OptimizerConfig cfg) : cfg_(cfg) {
  for (const auto& a : params.arrays()) {
    m_.push_back(nn::Mat::Zero(a.value.rows(), a.value.cols()));
    v_.push_back(nn::Mat::Zero(a.value.rows(), a.value.cols()));
  }
}

void Adam::step(DenoiserParams& params, const std::vector<nn::Mat>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& arrays = params.arrays();
  for (std::size_t a = 0; a < arrays.size(); ++a) {
    m_[a] = cfg_.beta1 * m_[a] + (1.0 - cfg_.beta1) * grads[a];
    v_[a] = cfg_.beta2 * v_[a] + (1.0 - cfg_.beta2) * grads[a].cwiseProduct(grads[a]);
    arrays[a].value.array() -= lr * (m_[a].array() / c1) / ((v_[a].array() / c2).sqrt() + cfg_.eps);
  }
  params.round_to_float();
}

std::vector<EpochStats> train(DenoiserParams& params, const std::vector<TrainingItem>& items,
                              const NoiseSchedule& sched, const OptimizerConfig& cfg, std::uint64_t seed, int workers,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (items.empty()) throw std::invalid_argument("train: no training items");
  const std::size_t n = items.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * cfg.epochs;

  Adam adam(params, cfg);
  std::vector<EpochStats> history;
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream shuffle(seed, mix_ids({0x5f1eull, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    double lr = cfg.lr0;
    for (std::size_t first = 0; first < n; first += batch) {
      const std::size_t count = std::min(batch, n - first);
      std::vector<TrainingItem> b;
      std::vector<int> steps;
      std::vector<FeatureMap> noise;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pos = first + k;
        RandomStream rng(seed, mix_ids({0x7a1eull, static_cast<std::uint64_t>(epoch), pos}));
        const auto& item = items[order[pos]];
        b.push_back(item);
        steps.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps))));
        FeatureMap eps(item.x0.order(), item.x0.channels());
        rng.fill_normal(eps.data());
        noise.push_back(std::move(eps));
      }
      const auto lg = loss_and_grad(b, steps, noise, sched, params, workers);
      loss_sum += lg.loss * static_cast<double>(count);
      lr = cosine_lr(cfg, adam.steps_taken(), total_steps);
      adam.step(params, lg.grads, lr);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(n);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stats.lr = lr;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

}  // namespace icodiff
