#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "icodiff/feature_map.hpp"
#include "icodiff/icosphere.hpp"
#include "icodiff/schedule.hpp"
#include "icodiff/tape.hpp"

namespace icodiff {

struct DenoiserConfig {
  int in_channels = 4;  // out_channels features + one-hot mask channels
  int out_channels = 2;
  int base_order = 6;
  int min_order = 2;
  std::vector<int> widths{16, 32, 64, 96, 128};  // finest level first
  int blocks_per_level = 2;
  std::vector<int> attention_orders{2, 3};
  int embed_dim = 64;
  // false drops the mask channels (zeros in their place): the unconditional ablation.
  bool use_mask = true;

  int levels() const noexcept { return base_order - min_order + 1; }
  int mask_channels() const noexcept { return in_channels - out_channels; }
  bool attends_at(int order) const;
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// One learnable array. Values are kept in double for computation but are
/// always float-representable, so an f32 checkpoint round-trips exactly.
enum class ParamKind { kConv, kOutputConv, kLinear, kBias, kNormGain, kNormShift, kTable };

struct ParamArray {
  std::string name;
  ParamKind kind = ParamKind::kLinear;
  // Logical shape, e.g. {out, in, 7} for a ring conv; its row-major order is
  // the row-major order of `value`.
  std::vector<std::size_t> shape;
  nn::Mat value;                   // 2-D storage used by the ops
};

class DenoiserParams {
 public:
  DenoiserParams() = default;
  explicit DenoiserParams(DenoiserConfig config);

  const DenoiserConfig& config() const noexcept { return config_; }
  std::vector<ParamArray>& arrays() noexcept { return arrays_; }
  const std::vector<ParamArray>& arrays() const noexcept { return arrays_; }

  std::size_t index(const std::string& name) const;
  nn::Mat& operator[](const std::string& name) { return arrays_[index(name)].value; }
  const nn::Mat& operator[](const std::string& name) const { return arrays_[index(name)].value; }

  std::size_t scalar_count() const noexcept;
  bool all_finite() const noexcept;
  // Rounds every value to the nearest float.
  void round_to_float();

 private:
  void add(std::string name, ParamKind kind, std::vector<std::size_t> shape, Eigen::Index rows, Eigen::Index cols);
  void add_conv(const std::string& name, int in, int out, ParamKind kind = ParamKind::kConv);
  void add_linear(const std::string& name, int in, int out, bool bias);
  void add_norm(const std::string& name, int channels);
  void add_resblock(const std::string& name, int in, int out);
  void add_attention(const std::string& name, int channels);

  DenoiserConfig config_;
  std::vector<ParamArray> arrays_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

enum class InitMode {
  kStandard,   // zero-mean normal convs (variance 1/fan_in), zero output projection
  kRandomAll,  // every array random, including norms, biases and the output projection
  kZero,
};

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed, InitMode mode = InitMode::kStandard);

// Sinusoidal embedding: first half sin(t * f_i), second half cos(t * f_i),
// with f_i geometric from 1 down to 1/10000.
std::vector<double> time_embedding(int t, int dim);

// gender row of the learned table plus silu(w * age + b).
std::vector<double> condition_embedding(double age_scaled, int gender, const DenoiserParams& params);

// Immutable mesh of each order, built on first use and shared.
const IcosphereMesh& cached_mesh(int order);

// Spherical 1-ring convolution on a feature map; weights are out x in x 7
// flattened to out x (in*7).
FeatureMap ring_conv(const FeatureMap& x, const nn::Mat& weights, const nn::Mat& bias, const IcosphereMesh& mesh);

// Keeps the vertices of the next coarser order.
FeatureMap pool(const FeatureMap& x, int from_order);
// Zero-pads the vertices added by the next finer order.
FeatureMap unpool(const FeatureMap& x, int to_order);

struct DenoiserInput {
  FeatureMap x_t;   // out_channels
  FeatureMap mask;  // mask_channels, one-hot per vertex
  int t = 0;
  double age_scaled = 0.0;
  int gender = 0;
};

// Velocity prediction for one subject.
FeatureMap denoiser_forward(const DenoiserInput& input, const DenoiserParams& params);

// Items are independent; evaluated in parallel on `workers` threads.
std::vector<FeatureMap> denoiser_forward_batch(std::span<const DenoiserInput> batch, const DenoiserParams& params,
                                               int workers = 1);

struct TrainingItem {
  FeatureMap x0;    // model space, out_channels
  FeatureMap mask;  // mask_channels
  double age_scaled = 0.0;
  int gender = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<nn::Mat> grads;  // parallel to params.arrays()
};

// Mean over batch, channels and vertices of (v_hat - v_target)^2, with exact
// gradients. Per-item gradients are summed in batch order whatever the
// worker count. Throws NumericalFault on a non-finite loss.
LossAndGrad loss_and_grad(std::span<const TrainingItem> batch, std::span<const int> steps,
                          std::span<const FeatureMap> noise, const NoiseSchedule& sched, const DenoiserParams& params,
                          int workers = 1);

}  // namespace icodiff
