#include "icodiff/normative.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "icodiff/errors.hpp"

namespace icodiff {

double normalize_thickness(double mm, std::size_t* clamped) {
  if (!std::isfinite(mm)) throw std::invalid_argument("normalize_thickness: non-finite input");
  if (mm < kThicknessMinMm || mm > kThicknessMaxMm) {
    if (clamped) ++*clamped;
    mm = std::clamp(mm, kThicknessMinMm, kThicknessMaxMm);
  }
  return mm / 2.5 - 1.0;
}

double denormalize_thickness(double y) { return (y + 1.0) * 2.5; }

double normalize_age(double years) {
  if (!(years >= 0.0 && years <= 100.0))
    throw std::invalid_argument("age must lie in [0, 100] years, got " + std::to_string(years));
  return years / 100.0;
}

FeatureMap to_model_space(const FeatureMap& native, std::size_t* clamped) {
  if (native.channels() != 2) throw ShapeError("expected thickness + shape index channels");
  FeatureMap out = native;
  for (auto& x : out.channel(0)) x = static_cast<float>(normalize_thickness(x, clamped));
  return out;
}

FeatureMap to_native_space(const FeatureMap& model) {
  if (model.channels() != 2) throw ShapeError("expected thickness + shape index channels");
  FeatureMap out = model;
  for (auto& x : out.channel(0)) x = static_cast<float>(denormalize_thickness(x));
  return out;
}

std::vector<double> roi_means(const FeatureMap& map, const ROIAtlas& atlas, std::size_t channel) {
  if (map.order() != atlas.order || atlas.labels.size() != map.vertex_count())
    throw ShapeError("roi_means: map and atlas are on different orders");
  if (channel >= map.channels()) throw ShapeError("roi_means: channel out of range");
  std::vector<double> sum(atlas.roi_count, 0.0);
  std::vector<std::size_t> count(atlas.roi_count, 0);
  const auto values = map.channel(channel);
  for (std::size_t v = 0; v < values.size(); ++v) {
    sum[atlas.labels[v]] += values[v];
    ++count[atlas.labels[v]];
  }
  for (std::size_t r = 0; r < sum.size(); ++r) {
    if (count[r] == 0) throw std::invalid_argument("roi_means: ROI " + std::to_string(r) + " is empty");
    sum[r] /= static_cast<double>(count[r]);
  }
  return sum;
}

AbnormalScores abnormal_score(std::span<const double> subject_roi, const std::vector<std::vector<double>>& samples_roi,
                              std::string subject_id) {
  const std::size_t n = samples_roi.size();
  if (n < 2) throw std::invalid_argument("abnormal_score needs at least 2 reference samples");
  const std::size_t r = subject_roi.size();
  for (const auto& s : samples_roi)
    if (s.size() != r) throw ShapeError("abnormal_score: sample ROI vector length differs from subject's");

  AbnormalScores out{std::move(subject_id), std::vector<double>(r)};
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (const auto& s : samples_roi) mean += s[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& s : samples_roi) ss += (s[i] - mean) * (s[i] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd >= 1e-8)) throw DegenerateReference(i, sd);
    out.scores[i] = (subject_roi[i] - mean) / sd;
  }
  return out;
}

namespace {

// 2-ring windows per mesh order, built once.
const std::vector<std::vector<std::uint32_t>>& two_ring_windows(const IcosphereMesh& mesh) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const std::vector<std::vector<std::uint32_t>>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[mesh.order()];
  if (!slot) {
    auto windows = std::make_unique<std::vector<std::vector<std::uint32_t>>>(mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) (*windows)[v] = mesh.k_ring(v, 2);
    slot = std::move(windows);
  }
  return *slot;
}

}  // namespace

double ssim_sphere(const FeatureMap& a, const FeatureMap& b, const IcosphereMesh& mesh, double data_range,
                   std::size_t channel) {
  require_same_shape(a, b, "ssim_sphere");
  if (a.order() != mesh.order()) throw ShapeError("ssim_sphere: map order does not match mesh");
  if (channel >= a.channels()) throw ShapeError("ssim_sphere: channel out of range");
  if (!(data_range > 0.0)) throw std::invalid_argument("ssim_sphere: data_range must be > 0");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const auto x = a.channel(channel);
  const auto y = b.channel(channel);
  const auto& windows = two_ring_windows(mesh);

  double total = 0.0;
  for (std::size_t v = 0; v < x.size(); ++v) {
    const auto& w = windows[v];
    const double n = static_cast<double>(w.size());
    double mx = 0, my = 0;
    for (auto u : w) {
      mx += x[u];
      my += y[u];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (auto u : w) {
      const double dx = x[u] - mx;
      const double dy = y[u] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(x.size());
}

double mse(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "mse");
  const auto x = a.data();
  const auto y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

double welch_p_value(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_p_value: each group needs >= 2 values");
  auto moments = [](std::span<const double> g) {
    double m = 0.0;
    for (double x : g) m += x;
    m /= static_cast<double>(g.size());
    double ss = 0.0;
    for (double x : g) ss += (x - m) * (x - m);
    return std::pair{m, ss / static_cast<double>(g.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  if (!(va > 0.0) || !(vb > 0.0)) throw std::invalid_argument("welch_p_value: a group has zero variance");
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  const double t = (ma - mb) / std::sqrt(sa + sb);
  const double df = (sa + sb) * (sa + sb) /
                    (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

}  // namespace icodiff
