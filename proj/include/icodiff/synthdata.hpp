#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icodiff/feature_map.hpp"
#include "icodiff/icosphere.hpp"

namespace icodiff {

enum class Group { kCN, kMCI, kAD };
enum class Split { kTrain, kTest };

std::string to_string(Group g);
std::string to_string(Split s);
Group parse_group(const std::string& s);
Split parse_split(const std::string& s);

struct CohortConfig {
  int mesh_order = 3;
  std::size_t roi_count = kDefaultRoiCount;
  std::uint64_t atlas_seed = 7;
  int n_cn_train = 400;
  int n_cn_test = 82;
  int n_mci = 82;
  int n_ad = 82;
  std::vector<std::uint32_t> atrophy_rois{0, 1, 2, 3, 4, 5};
  double atrophy_mci_mm = 0.25;
  double atrophy_ad_mm = 0.5;
  double age_min = 55.0;
  double age_max = 90.0;
  double age_slope_mm_per_year = -0.01;
  double noise_sd_mm = 0.15;
  double shape_index_noise_sd = 0.05;
  int smoothness = 2;  // k-ring radius of the noise smoothing
  std::uint64_t seed = 2024;

  // Group sizes multiplied by `factor` and rounded to the nearest integer.
  CohortConfig scaled(double factor) const;
  double atrophy_mm(Group g) const;
  void validate() const;
};

/// One synthetic subject. Features are in native units: channel 0 is cortical
/// thickness in mm, channel 1 the shape index in [-1, 1]. The mask is one-hot
/// with channel 0 gyral and channel 1 sulcal.
struct SubjectRecord {
  std::string id;
  Group group = Group::kCN;
  Split split = Split::kTrain;
  double age = 70.0;
  int gender = 0;
  std::uint64_t seed = 0;
  FeatureMap features;
  FeatureMap mask;
};

// Smooth folding field: sum of 16 cosine lobes around shared base poles,
// with per-subject pole jitter and random phases.
std::vector<double> folding_field(const IcosphereMesh& mesh, std::uint64_t subject_seed);

// Folding field thresholded at its median, one-hot into 2 channels.
FeatureMap gen_segmentation(const IcosphereMesh& mesh, std::uint64_t subject_seed);

// Averages each vertex over its k-ring.
std::vector<double> ring_smooth(const IcosphereMesh& mesh, const std::vector<double>& values, int radius);

SubjectRecord gen_subject(const IcosphereMesh& mesh, const ROIAtlas& atlas, const CohortConfig& cfg, Group group,
                          double age, int gender, std::uint64_t subject_seed);

// Per-subject seed: mix_ids({master, group, split, index}).
std::uint64_t subject_seed(std::uint64_t master, Group g, Split s, int index);

struct CohortSummary {
  int cn_train = 0, cn_test = 0, mci = 0, ad = 0;
  std::filesystem::path dir;
};

// Writes manifest.tsv, atlas.icra and subj_<id>_{feat,mask}.icsf into `dir`
// (created if missing). Output is a pure function of `cfg`.
CohortSummary gen_cohort(const CohortConfig& cfg, const std::filesystem::path& dir, int workers = 1);

}  // namespace icodiff
