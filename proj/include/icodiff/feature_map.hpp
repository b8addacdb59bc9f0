#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace icodiff {

/// Multi-channel per-vertex field on an icosphere of a given order.
/// Storage is channel-major: data[c * V + v].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int order, std::size_t channels, float fill = 0.0f);

  int order() const noexcept { return order_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t vertex_count() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return data_.size(); }

  // Views into a temporary would dangle, so they only exist on lvalues.
  std::span<float> data() & noexcept { return data_; }
  std::span<const float> data() const& noexcept { return data_; }
  std::span<const float> data() && = delete;
  std::span<float> channel(std::size_t c) & noexcept { return {data_.data() + c * vertices_, vertices_}; }
  std::span<const float> channel(std::size_t c) && = delete;
  std::span<const float> channel(std::size_t c) const& noexcept {
    return {data_.data() + c * vertices_, vertices_};
  }

  float& at(std::size_t c, std::size_t v) noexcept { return data_[c * vertices_ + v]; }
  float at(std::size_t c, std::size_t v) const noexcept { return data_[c * vertices_ + v]; }

  bool same_shape(const FeatureMap& other) const noexcept {
    return order_ == other.order_ && channels_ == other.channels_;
  }
  bool all_finite() const noexcept;

  // Copy of a channel range [first, first + count).
  FeatureMap slice_channels(std::size_t first, std::size_t count) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int order_ = 0;
  std::size_t channels_ = 0;
  std::size_t vertices_ = 0;
  std::vector<float> data_;
};

// Throws ShapeError when a and b differ in order or channel count.
void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what);

// ICSF: "ICSF", u32 version=1, u32 order, u32 channels, then channels*V
// little-endian f32 values, channel-major.
void write_feature_map(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::filesystem::path& path);

}  // namespace icodiff
