#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace icodiff {

using FeatureMatrix = std::vector<std::vector<double>>;  // rows are subjects

struct SvmOptions {
  double c_reg = 1.0;
  int epochs = 200;
  double step0 = 1e-2;  // step at epoch e is step0 / sqrt(e)
  std::uint64_t seed = 0;
};

/// Linear SVM trained by subgradient descent on
///   1/(2 C M) ||w||^2 + 1/M sum_i max(0, 1 - y_i (w.x_i + b))
/// over columns standardized with the training rows' mean and sd.
struct LinearSvm {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;  // 1/sd, or 0 for constant columns
  int majority = 1;           // returned when the decision value is exactly 0

  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
};

// labels are +1 / -1. Throws std::invalid_argument when only one class is present.
LinearSvm svm_train(const FeatureMatrix& features, std::span<const int> labels, const SvmOptions& opts = {});

struct Confusion {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  int total() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const noexcept;
  double precision() const noexcept;  // 0 when nothing was predicted positive
  double recall() const noexcept;     // 0 when there are no positives
  Confusion& operator+=(const Confusion& o) noexcept;
};

struct FoldResult {
  std::vector<std::size_t> test_indices;
  Confusion confusion;
};

struct ClassifierReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  Confusion confusion;  // pooled over folds
  std::vector<FoldResult> folds;
};

/// Stratified k-fold cross-validation; +1 is the positive (disease) class.
/// Each fold trains on k-1 parts and tests on the remaining one. With
/// `inverted`, each fold trains on one part and tests on the other k-1.
ClassifierReport kfold_cv(const FeatureMatrix& features, std::span<const int> labels, int k, std::uint64_t seed,
                          bool inverted = false, const SvmOptions& opts = {});

}  // namespace icodiff
