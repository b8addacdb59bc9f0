#include "icodiff/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "icodiff/binary_io.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/icosphere.hpp"

namespace icodiff {

FeatureMap::FeatureMap(int order, std::size_t channels, float fill)
    : order_(order), channels_(channels), vertices_(prefix_count(order)), data_(channels * vertices_, fill) {
  if (channels == 0) throw ShapeError("feature map needs at least one channel");
}

bool FeatureMap::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

FeatureMap FeatureMap::slice_channels(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > channels_) throw ShapeError("channel slice out of range");
  FeatureMap out(order_, count);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * vertices_), count * vertices_,
              out.data_.begin());
  return out;
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch (order " + std::to_string(a.order()) + "/" +
                     std::to_string(b.order()) + ", channels " + std::to_string(a.channels()) + "/" +
                     std::to_string(b.channels()) + ")");
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  io::write_magic(os, "ICSF");
  io::write_u32(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(map.order()));
  io::write_u32(os, static_cast<std::uint32_t>(map.channels()));
  for (float x : map.data()) io::write_f32(os, x);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open feature map " + path.string());
  io::expect_magic(is, "ICSF");
  if (const auto version = io::read_u32(is); version != 1)
    throw FormatError("unsupported ICSF version " + std::to_string(version));
  const auto order = static_cast<int>(io::read_u32(is));
  const auto channels = io::read_u32(is);
  if (order < 0 || order > kMaxMeshOrder || channels == 0 || channels > 4096)
    throw FormatError("ICSF header out of range in " + path.string());
  FeatureMap map(order, channels);
  for (float& x : map.data()) x = io::read_f32(is);
  return map;
}

}  // namespace icodiff
