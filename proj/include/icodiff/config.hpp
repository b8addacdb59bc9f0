#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "icodiff/classifier.hpp"
#include "icodiff/denoiser.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/sampler.hpp"
#include "icodiff/synthdata.hpp"
#include "icodiff/training.hpp"

namespace icodiff {

// Bad configuration value; key() is the dotted JSON path, e.g. "optimizer.lr0".
class ConfigError : public FormatError {
 public:
  ConfigError(std::string key, const std::string& why)
      : FormatError("config key '" + key + "': " + why), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct ClassifyConfig {
  int folds = 10;
  bool inverted = false;  // train on one part, test on the other k-1
  SvmOptions svm;
};

/// Everything one run needs. `mesh_order` drives both the cohort and the
/// denoiser's base order; `seed` is the master seed every stage derives from.
struct RunConfig {
  std::uint64_t seed = 2024;
  int workers = 1;
  int mesh_order = 6;
  std::string data_dir = "data";
  std::string run_dir = "run";

  CohortConfig cohort;
  double cohort_scale = 1.0;  // applied to the cohort group sizes
  int steps = kDefaultSteps;
  double cosine_offset = kDefaultCosineOffset;
  DenoiserConfig denoiser;
  OptimizerConfig optimizer;
  SamplerConfig sampler;
  int template_k = 10;  // reference size of the template baseline
  ClassifyConfig classify;

  // Cohort with the master seed, mesh order and scale applied.
  CohortConfig effective_cohort() const;
  // Denoiser with the mesh order applied.
  DenoiserConfig effective_denoiser() const;
  // Throws ConfigError naming the key.
  void validate() const;
};

// Parses a JSON document. Unknown keys and wrong types raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON form of `cfg`, every key present.
std::string to_json(const RunConfig& cfg);

}  // namespace icodiff
