#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "icodiff/feature_map.hpp"
#include "icodiff/icosphere.hpp"

namespace icodiff {

inline constexpr double kThicknessMinMm = 0.0;
inline constexpr double kThicknessMaxMm = 5.0;

// [0, 5] mm -> [-1, 1]: y = mm / 2.5 - 1. Inputs outside the range are
// clamped and counted in *clamped when given.
double normalize_thickness(double mm, std::size_t* clamped = nullptr);
double denormalize_thickness(double y);

// years / 100; throws std::invalid_argument outside [0, 100].
double normalize_age(double years);

// Native features (thickness mm, shape index) <-> model space
// (normalized thickness, shape index).
FeatureMap to_model_space(const FeatureMap& native, std::size_t* clamped = nullptr);
FeatureMap to_native_space(const FeatureMap& model);

// Per-ROI mean of channel `channel`.
std::vector<double> roi_means(const FeatureMap& map, const ROIAtlas& atlas, std::size_t channel = 0);

struct AbnormalScores {
  std::string subject_id;
  std::vector<double> scores;
};

// Z_i = (x_i - mean_j x_ij) / sd_j x_ij with the sample (N - 1) standard
// deviation. samples_roi holds one R-vector per reference sample. Throws
// DegenerateReference when some ROI's sd is below 1e-8.
AbnormalScores abnormal_score(std::span<const double> subject_roi, const std::vector<std::vector<double>>& samples_roi,
                              std::string subject_id = {});

// Mean of per-vertex SSIM over uniformly weighted 2-ring windows, on channel
// `channel` of both maps. C1 = (0.01 L)^2, C2 = (0.03 L)^2 for data range L.
double ssim_sphere(const FeatureMap& a, const FeatureMap& b, const IcosphereMesh& mesh, double data_range,
                   std::size_t channel = 0);

// Mean squared difference over all channels and vertices.
double mse(const FeatureMap& a, const FeatureMap& b);

// Two-sided Welch t-test.
double welch_p_value(std::span<const double> a, std::span<const double> b);

}  // namespace icodiff
