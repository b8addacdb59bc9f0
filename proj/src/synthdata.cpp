#include "icodiff/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "icodiff/dataset.hpp"
#include "icodiff/parallel.hpp"
#include "icodiff/rng.hpp"

namespace icodiff {

std::string to_string(Group g) {
  switch (g) {
    case Group::kCN: return "CN";
    case Group::kMCI: return "MCI";
    case Group::kAD: return "AD";
  }
  return "?";
}

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Group parse_group(const std::string& s) {
  if (s == "CN") return Group::kCN;
  if (s == "MCI") return Group::kMCI;
  if (s == "AD") return Group::kAD;
  throw std::invalid_argument("unknown group '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "'");
}

CohortConfig CohortConfig::scaled(double factor) const {
  CohortConfig c = *this;
  auto scale = [factor](int n) { return static_cast<int>(std::lround(n * factor)); };
  c.n_cn_train = scale(n_cn_train);
  c.n_cn_test = scale(n_cn_test);
  c.n_mci = scale(n_mci);
  c.n_ad = scale(n_ad);
  return c;
}

double CohortConfig::atrophy_mm(Group g) const {
  switch (g) {
    case Group::kCN: return 0.0;
    case Group::kMCI: return atrophy_mci_mm;
    case Group::kAD: return atrophy_ad_mm;
  }
  return 0.0;
}

void CohortConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("cohort." + key + ": " + why);
  };
  if (mesh_order < 0 || mesh_order > kMaxMeshOrder) fail("mesh_order", "must be in [0, 8]");
  if (roi_count < 1 || roi_count > prefix_count(mesh_order)) fail("roi_count", "must be in [1, vertex count]");
  if (n_cn_train < 0 || n_cn_test < 0 || n_mci < 0 || n_ad < 0) fail("n_*", "group sizes must be >= 0");
  for (auto r : atrophy_rois)
    if (r >= roi_count) fail("atrophy_rois", "ROI " + std::to_string(r) + " outside [0, roi_count)");
  if (atrophy_mci_mm < 0.0) fail("atrophy_mci_mm", "must be >= 0");
  if (atrophy_ad_mm < 0.0) fail("atrophy_ad_mm", "must be >= 0");
  if (!(age_min >= 0.0 && age_min <= age_max && age_max <= 100.0)) fail("age_min", "need 0 <= age_min <= age_max <= 100");
  if (noise_sd_mm < 0.0) fail("noise_sd_mm", "must be >= 0");
  if (shape_index_noise_sd < 0.0) fail("shape_index_noise_sd", "must be >= 0");
  if (smoothness < 0) fail("smoothness", "must be >= 0");
}

namespace {

constexpr std::uint64_t kFoldingBaseSeed = 0xF01D'1E55ull;
constexpr int kLobes = 16;

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

// Centers `v` and scales it to standard deviation `sd`.
void standardize(std::vector<double>& v, double sd) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double s = var > 0.0 ? sd / std::sqrt(var) : 0.0;
  for (double& x : v) x = (x - mean) * s;
}

std::vector<double> smooth_noise(const IcosphereMesh& mesh, RandomStream& rng, int radius, double sd) {
  std::vector<double> white(mesh.vertex_count());
  for (double& x : white) x = rng.normal();
  auto smooth = ring_smooth(mesh, white, radius);
  standardize(smooth, sd);
  return smooth;
}

}  // namespace

std::vector<double> folding_field(const IcosphereMesh& mesh, std::uint64_t seed) {
  RandomStream base(kFoldingBaseSeed, 0);
  RandomStream subj(seed, mix_ids({0xF01Dull}));
  std::array<Vec3, kLobes> poles;
  std::array<double, kLobes> freq, amp, phase;
  for (int j = 0; j < kLobes; ++j) {
    Vec3 p{base.normal(), base.normal(), base.normal()};
    const double n0 = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    for (auto& c : p) c = c / n0 + 0.25 * subj.normal();
    const double n1 = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    for (auto& c : p) c /= n1;
    poles[j] = p;
    freq[j] = 2.5 + 3.5 * base.uniform();
    amp[j] = 0.5 + 0.5 * base.uniform();
    phase[j] = 2.0 * std::numbers::pi * subj.uniform();
  }
  std::vector<double> field(mesh.vertex_count(), 0.0);
  for (std::size_t v = 0; v < field.size(); ++v) {
    const auto& x = mesh.vertices()[v];
    double f = 0.0;
    for (int j = 0; j < kLobes; ++j)
      f += amp[j] * std::cos(freq[j] * (x[0] * poles[j][0] + x[1] * poles[j][1] + x[2] * poles[j][2]) + phase[j]);
    field[v] = f;
  }
  return field;
}

FeatureMap gen_segmentation(const IcosphereMesh& mesh, std::uint64_t subject_seed) {
  const auto field = folding_field(mesh, subject_seed);
  const double m = median(field);
  FeatureMap mask(mesh.order(), 2);
  for (std::size_t v = 0; v < field.size(); ++v) {
    const bool gyral = field[v] > m;
    mask.at(0, v) = gyral ? 1.0f : 0.0f;
    mask.at(1, v) = gyral ? 0.0f : 1.0f;
  }
  return mask;
}

std::vector<double> ring_smooth(const IcosphereMesh& mesh, const std::vector<double>& values, int radius) {
  if (radius <= 0) return values;
  std::vector<double> out(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    const auto ring = mesh.k_ring(v, radius);
    double s = 0.0;
    for (auto u : ring) s += values[u];
    out[v] = s / static_cast<double>(ring.size());
  }
  return out;
}

std::uint64_t subject_seed(std::uint64_t master, Group g, Split s, int index) {
  return mix_ids({master, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(index)});
}

SubjectRecord gen_subject(const IcosphereMesh& mesh, const ROIAtlas& atlas, const CohortConfig& cfg, Group group,
                          double age, int gender, std::uint64_t seed) {
  if (atlas.labels.size() != mesh.vertex_count()) throw std::invalid_argument("gen_subject: atlas/mesh order mismatch");
  const auto field = folding_field(mesh, seed);
  const double m = median(field);
  double field_sd = 0.0;
  for (double f : field) field_sd += (f - m) * (f - m);
  field_sd = std::sqrt(field_sd / static_cast<double>(field.size()));

  RandomStream ct_rng(seed, mix_ids({0xC7ull}));
  RandomStream si_rng(seed, mix_ids({0x51ull}));
  const auto ct_noise = smooth_noise(mesh, ct_rng, cfg.smoothness, cfg.noise_sd_mm);
  const auto si_noise = smooth_noise(mesh, si_rng, cfg.smoothness, cfg.shape_index_noise_sd);

  std::vector<bool> atrophic(atlas.roi_count, false);
  for (auto r : cfg.atrophy_rois) atrophic.at(r) = true;
  const double shift = cfg.atrophy_mm(group);

  SubjectRecord rec;
  rec.group = group;
  rec.age = age;
  rec.gender = gender;
  rec.seed = seed;
  rec.features = FeatureMap(mesh.order(), 2);
  rec.mask = FeatureMap(mesh.order(), 2);
  for (std::size_t v = 0; v < field.size(); ++v) {
    const bool gyral = field[v] > m;
    double ct = 2.5 + (gyral ? 0.5 : -0.5) + cfg.age_slope_mm_per_year * (age - 70.0) + ct_noise[v];
    if (atrophic[atlas.labels[v]]) ct -= shift;
    const double si = std::tanh(1.5 * (field[v] - m) / field_sd) + si_noise[v];
    rec.features.at(0, v) = static_cast<float>(std::clamp(ct, 0.5, 4.5));
    rec.features.at(1, v) = static_cast<float>(std::clamp(si, -1.0, 1.0));
    rec.mask.at(0, v) = gyral ? 1.0f : 0.0f;
    rec.mask.at(1, v) = gyral ? 0.0f : 1.0f;
  }
  return rec;
}

CohortSummary gen_cohort(const CohortConfig& cfg, const std::filesystem::path& dir, int workers) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  const auto mesh = build_icosphere(cfg.mesh_order);
  const auto atlas = voronoi_atlas(mesh, cfg.roi_count, cfg.atlas_seed);
  write_atlas(atlas_path(dir), atlas);

  struct Plan {
    Group group;
    Split split;
    int count;
    const char* prefix;
  };
  const Plan plans[] = {{Group::kCN, Split::kTrain, cfg.n_cn_train, "cntrain"},
                        {Group::kCN, Split::kTest, cfg.n_cn_test, "cn"},
                        {Group::kMCI, Split::kTest, cfg.n_mci, "mci"},
                        {Group::kAD, Split::kTest, cfg.n_ad, "ad"}};
  std::vector<ManifestRow> rows;
  for (const auto& p : plans) {
    for (int i = 0; i < p.count; ++i) {
      ManifestRow r;
      char id[32];
      std::snprintf(id, sizeof id, "%s%04d", p.prefix, i);
      r.id = id;
      r.group = p.group;
      r.split = p.split;
      r.seed = subject_seed(cfg.seed, p.group, p.split, i);
      RandomStream rng(r.seed, mix_ids({0xA6Eull}));
      // 0.1-year resolution keeps the manifest text exact.
      r.age = std::round((cfg.age_min + (cfg.age_max - cfg.age_min) * rng.uniform()) * 10.0) / 10.0;
      r.gender = i % 2;
      rows.push_back(std::move(r));
    }
  }
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    const auto& r = rows[i];
    auto rec = gen_subject(mesh, atlas, cfg, r.group, r.age, r.gender, r.seed);
    write_feature_map(feature_path(dir, r.id), rec.features);
    write_feature_map(mask_path(dir, r.id), rec.mask);
  });
  write_manifest(dir, rows);
  return {cfg.n_cn_train, cfg.n_cn_test, cfg.n_mci, cfg.n_ad, dir};
}

}  // namespace icodiff
