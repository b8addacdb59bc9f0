#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "icodiff/synthdata.hpp"

namespace icodiff {

// manifest.tsv columns: id, group (CN|MCI|AD), split (train|test), age, gender, seed.
struct ManifestRow {
  std::string id;
  Group group = Group::kCN;
  Split split = Split::kTrain;
  double age = 0.0;
  int gender = 0;
  std::uint64_t seed = 0;
};

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path mask_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path atlas_path(const std::filesystem::path& dir);
std::filesystem::path manifest_path(const std::filesystem::path& dir);

void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestRow>& rows);
// Throws FormatError naming the line on malformed input.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir);

// Loads features and mask of one manifest row.
SubjectRecord load_subject(const std::filesystem::path& dir, const ManifestRow& row);

}  // namespace icodiff
