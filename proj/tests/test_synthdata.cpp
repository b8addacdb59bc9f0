#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "doctest.h"
#include "icodiff/dataset.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/normative.hpp"
#include "icodiff/synthdata.hpp"

using namespace icodiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("icodiff_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Mean thickness inside / outside the atrophy ROIs.
std::pair<double, double> region_means(const SubjectRecord& r, const ROIAtlas& atlas, const CohortConfig& cfg) {
  std::vector<bool> hit(atlas.roi_count, false);
  for (auto x : cfg.atrophy_rois) hit[x] = true;
  double in = 0, out = 0, nin = 0, nout = 0;
  for (std::size_t v = 0; v < atlas.labels.size(); ++v) {
    if (hit[atlas.labels[v]]) {
      in += r.features.at(0, v);
      ++nin;
    } else {
      out += r.features.at(0, v);
      ++nout;
    }
  }
  return {in / nin, out / nout};
}

}  // namespace

TEST_CASE("segmentation masks are one-hot and balanced") {
  const auto mesh = build_icosphere(3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = gen_segmentation(mesh, s);
    double gyral = 0;
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
      CHECK(m.at(0, v) + m.at(1, v) == 1.0f);
      CHECK((m.at(0, v) == 0.0f || m.at(0, v) == 1.0f));
      gyral += m.at(0, v);
    }
    const double frac = gyral / static_cast<double>(mesh.vertex_count());
    CHECK(frac >= 0.45);
    CHECK(frac <= 0.55);
  }
}

TEST_CASE("different subject seeds give different folding") {
  const auto mesh = build_icosphere(3);
  for (std::uint64_t pair = 0; pair < 20; ++pair) {
    const auto a = gen_segmentation(mesh, 2 * pair + 100);
    const auto b = gen_segmentation(mesh, 2 * pair + 101);
    std::size_t differ = 0;
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) differ += a.at(0, v) != b.at(0, v);
    CHECK(static_cast<double>(differ) / static_cast<double>(mesh.vertex_count()) > 0.05);
  }
}

TEST_CASE("subject generation is deterministic and in range") {
  const auto mesh = build_icosphere(3);
  const auto atlas = voronoi_atlas(mesh, 34, 7);
  const CohortConfig cfg;
  const auto a = gen_subject(mesh, atlas, cfg, Group::kAD, 72.5, 1, 42);
  const auto b = gen_subject(mesh, atlas, cfg, Group::kAD, 72.5, 1, 42);
  CHECK(a.features == b.features);
  CHECK(a.mask == b.mask);
  CHECK(a.mask == gen_segmentation(mesh, 42));
  for (float ct : a.features.channel(0)) {
    CHECK(ct >= 0.5f);
    CHECK(ct <= 4.5f);
  }
  for (float si : a.features.channel(1)) {
    CHECK(si >= -1.0f);
    CHECK(si <= 1.0f);
  }
  const auto model = to_model_space(a.features);
  for (float y : model.channel(0)) {
    CHECK(y > -1.0f);
    CHECK(y < 1.0f);
  }
}

TEST_CASE("gyral vertices are thicker and the shape index follows the mask") {
  const auto mesh = build_icosphere(3);
  const auto atlas = voronoi_atlas(mesh, 34, 7);
  const auto r = gen_subject(mesh, atlas, CohortConfig{}, Group::kCN, 70, 0, 9);
  double g = 0, s = 0, ng = 0, ns = 0, agree = 0;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const bool gyral = r.mask.at(0, v) == 1.0f;
    (gyral ? g : s) += r.features.at(0, v);
    (gyral ? ng : ns) += 1;
    agree += (r.features.at(1, v) > 0) == gyral;
  }
  CHECK(g / ng - s / ns == doctest::Approx(1.0).epsilon(0.1));
  CHECK(agree / static_cast<double>(mesh.vertex_count()) > 0.9);
}

TEST_CASE("atrophy is confined to the atrophy ROIs") {
  const auto mesh = build_icosphere(3);
  const auto atlas = voronoi_atlas(mesh, 34, 7);
  const CohortConfig cfg;
  double cn_in = 0, cn_out = 0, ad_in = 0, ad_out = 0;
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    const auto cn = region_means(gen_subject(mesh, atlas, cfg, Group::kCN, 70, 0, 1000 + i), atlas, cfg);
    const auto ad = region_means(gen_subject(mesh, atlas, cfg, Group::kAD, 70, 0, 2000 + i), atlas, cfg);
    cn_in += cn.first / n;
    cn_out += cn.second / n;
    ad_in += ad.first / n;
    ad_out += ad.second / n;
  }
  CHECK(std::abs(cn_in - cn_out) < 0.1);
  CHECK(cn_in - ad_in == doctest::Approx(0.5).epsilon(0.2));
  CHECK(std::abs(cn_out - ad_out) < 0.05);
}

TEST_CASE("age slope lowers thickness") {
  const auto mesh = build_icosphere(2);
  const auto atlas = voronoi_atlas(mesh, 34, 7);
  const CohortConfig cfg;
  const auto young = gen_subject(mesh, atlas, cfg, Group::kCN, 60, 0, 5);
  const auto old = gen_subject(mesh, atlas, cfg, Group::kCN, 80, 0, 5);
  double d = 0;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) d += young.features.at(0, v) - old.features.at(0, v);
  CHECK(d / static_cast<double>(mesh.vertex_count()) == doctest::Approx(0.2).epsilon(1e-3));
}

TEST_CASE("cohort config scaling and validation") {
  const auto c = CohortConfig{}.scaled(0.1);
  CHECK(c.n_cn_train == 40);
  CHECK(c.n_cn_test == 8);
  CHECK(c.n_mci == 8);
  CHECK(c.n_ad == 8);
  CohortConfig bad;
  bad.atrophy_rois = {40};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = CohortConfig{};
  bad.atrophy_ad_mm = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(CohortConfig{}.atrophy_mm(Group::kMCI) == 0.25);
  CHECK(parse_group("AD") == Group::kAD);
  CHECK(parse_split(to_string(Split::kTest)) == Split::kTest);
  CHECK_THROWS_AS(parse_group("XX"), std::invalid_argument);
}

TEST_CASE("cohort files, manifest and byte-identical reruns") {
  CohortConfig cfg = CohortConfig{}.scaled(0.02);
  cfg.mesh_order = 2;
  const auto d1 = scratch("cohort1");
  const auto d2 = scratch("cohort2");
  gen_cohort(cfg, d1, 1);
  gen_cohort(cfg, d2, 3);

  const auto rows = read_manifest(d1);
  CHECK(rows.size() == static_cast<std::size_t>(cfg.n_cn_train + cfg.n_cn_test + cfg.n_mci + cfg.n_ad));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(d1))
    if (e.path().extension() == ".icsf") ++files;
  CHECK(files == 2 * rows.size());

  for (const auto& e : fs::directory_iterator(d1)) CHECK(slurp(e.path()) == slurp(d2 / e.path().filename()));

  const auto rec = load_subject(d1, rows.back());
  CHECK(rec.group == Group::kAD);
  CHECK(rec.features.order() == 2);
  CHECK(rec.features == gen_subject(build_icosphere(2), read_atlas(atlas_path(d1)), cfg, rec.group, rec.age,
                                    rec.gender, rec.seed)
                            .features);
  for (const auto& r : rows) {
    CHECK(r.age >= cfg.age_min);
    CHECK(r.age <= cfg.age_max);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("malformed manifest names the line") {
  const auto d = scratch("badmanifest");
  fs::create_directories(d);
  {
    std::ofstream out(manifest_path(d));
    out << "id\tgroup\tsplit\tage\tgender\tseed\n";
    out << "a\tCN\ttrain\t70.0\t0\t1\n";
    out << "b\tZZ\ttrain\t70.0\t0\t1\n";
  }
  try {
    read_manifest(d);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  fs::remove_all(d);
}
