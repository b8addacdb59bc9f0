#include "icodiff/classifier.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "icodiff/rng.hpp"

namespace icodiff {

double LinearSvm::decision(std::span<const double> x) const {
  double s = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * (x[j] - mean[j]) * scale[j];
  return s;
}

int LinearSvm::predict(std::span<const double> x) const {
  const double d = decision(x);
  if (d > 0.0) return 1;
  if (d < 0.0) return -1;
  return majority;
}

LinearSvm svm_train(const FeatureMatrix& features, std::span<const int> labels, const SvmOptions& opts) {
  const std::size_t m = features.size();
  if (m < 2 || labels.size() != m) throw std::invalid_argument("svm_train: need >= 2 rows with one label each");
  const std::size_t d = features[0].size();
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (features[i].size() != d) throw std::invalid_argument("svm_train: ragged feature rows");
    if (labels[i] == 1)
      ++pos;
    else if (labels[i] == -1)
      ++neg;
    else
      throw std::invalid_argument("svm_train: labels must be +1 or -1");
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("svm_train: both classes must be present");

  LinearSvm svm;
  svm.weights.assign(d, 0.0);
  svm.mean.assign(d, 0.0);
  svm.scale.assign(d, 0.0);
  svm.majority = pos >= neg ? 1 : -1;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (const auto& row : features) mu += row[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (const auto& row : features) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(m);
    svm.mean[j] = mu;
    svm.scale[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
  }

  FeatureMatrix z(m, std::vector<double>(d));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (features[i][j] - svm.mean[j]) * svm.scale[j];

  const double lambda = 1.0 / (opts.c_reg * static_cast<double>(m));
  std::vector<std::size_t> order(m);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const double eta = opts.step0 / std::sqrt(static_cast<double>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream rng(opts.seed, mix_ids({0x5e3ull, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (auto i : order) {
      const double y = labels[i];
      double margin = svm.bias;
      for (std::size_t j = 0; j < d; ++j) margin += svm.weights[j] * z[i][j];
      margin *= y;
      for (auto& w : svm.weights) w -= eta * lambda * w;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) svm.weights[j] += eta * y * z[i][j];
        svm.bias += eta * y;
      }
    }
  }
  return svm;
}

double Confusion::accuracy() const noexcept { return total() ? double(tp + tn) / total() : 0.0; }
double Confusion::precision() const noexcept { return tp + fp ? double(tp) / (tp + fp) : 0.0; }
double Confusion::recall() const noexcept { return tp + fn ? double(tp) / (tp + fn) : 0.0; }

Confusion& Confusion::operator+=(const Confusion& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ClassifierReport kfold_cv(const FeatureMatrix& features, std::span<const int> labels, int k, std::uint64_t seed,
                          bool inverted, const SvmOptions& opts) {
  if (k < 2) throw std::invalid_argument("kfold_cv: k must be >= 2");
  if (labels.size() != features.size()) throw std::invalid_argument("kfold_cv: one label per row required");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("kfold_cv: each class needs at least k = " + std::to_string(k) + " members (have " +
                                std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) +
                                " negative)");

  // Stratified assignment: shuffle each class, then deal round-robin.
  std::vector<int> fold(labels.size());
  std::uint64_t cls = 0;
  for (auto* members : {&pos, &neg}) {
    RandomStream rng(seed, mix_ids({0xF01Dull, cls++}));
    for (std::size_t i = members->size(); i > 1; --i) std::swap((*members)[i - 1], (*members)[rng.below(i)]);
    for (std::size_t r = 0; r < members->size(); ++r) fold[(*members)[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  }

  ClassifierReport report;
  for (int f = 0; f < k; ++f) {
    FeatureMatrix train_x;
    std::vector<int> train_y;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool in_fold = fold[i] == f;
      if (in_fold != inverted) {
        test.push_back(i);
      } else {
        train_x.push_back(features[i]);
        train_y.push_back(labels[i]);
      }
    }
    SvmOptions fold_opts = opts;
    fold_opts.seed = mix_ids({seed, static_cast<std::uint64_t>(f)});
    const auto svm = svm_train(train_x, train_y, fold_opts);
    FoldResult result;
    result.test_indices = test;
    for (auto i : test) {
      const int p = svm.predict(features[i]);
      if (labels[i] == 1)
        (p == 1 ? result.confusion.tp : result.confusion.fn)++;
      else
        (p == 1 ? result.confusion.fp : result.confusion.tn)++;
    }
    report.confusion += result.confusion;
    report.folds.push_back(std::move(result));
  }
  report.accuracy = report.confusion.accuracy();
  report.precision = report.confusion.precision();
  report.recall = report.confusion.recall();
  return report;
}

}  // namespace icodiff
