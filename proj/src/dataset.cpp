#include "icodiff/dataset.hpp"

#include <fstream>
#include <sstream>

#include "icodiff/errors.hpp"

namespace icodiff {

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / ("subj_" + id + "_feat.icsf");
}

std::filesystem::path mask_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / ("subj_" + id + "_mask.icsf");
}

std::filesystem::path atlas_path(const std::filesystem::path& dir) { return dir / "atlas.icra"; }
std::filesystem::path manifest_path(const std::filesystem::path& dir) { return dir / "manifest.tsv"; }

void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestRow>& rows) {
  std::ofstream os(manifest_path(dir));
  if (!os) throw std::runtime_error("cannot write " + manifest_path(dir).string());
  os << "id\tgroup\tsplit\tage\tgender\tseed\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.id << '\t' << to_string(r.group) << '\t' << to_string(r.split) << '\t' << r.age << '\t' << r.gender
       << '\t' << r.seed << '\n';
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir) {
  const auto path = manifest_path(dir);
  std::ifstream is(path);
  if (!is) throw FormatError("missing manifest " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "id\tgroup\tsplit\tage\tgender\tseed")
    throw FormatError(path.string() + ": unexpected header");
  std::vector<ManifestRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRow r;
    std::string group, split;
    if (!(ls >> r.id >> group >> split >> r.age >> r.gender >> r.seed))
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": malformed row");
    try {
      r.group = parse_group(group);
      r.split = parse_split(split);
    } catch (const std::invalid_argument& e) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

SubjectRecord load_subject(const std::filesystem::path& dir, const ManifestRow& row) {
  SubjectRecord rec;
  rec.id = row.id;
  rec.group = row.group;
  rec.split = row.split;
  rec.age = row.age;
  rec.gender = row.gender;
  rec.seed = row.seed;
  rec.features = read_feature_map(feature_path(dir, row.id));
  rec.mask = read_feature_map(mask_path(dir, row.id));
  if (rec.features.channels() != 2 || rec.mask.channels() != 2 || rec.features.order() != rec.mask.order())
    throw FormatError("subject " + row.id + ": expected 2-channel features and mask on the same order");
  return rec;
}

}  // namespace icodiff
