#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace icodiff {

using Vec3 = std::array<double, 3>;

inline constexpr int kMaxMeshOrder = 8;
inline constexpr std::size_t kRingSize = 7;

// Number of vertices of the order-k icosphere, 10*4^k + 2.
std::size_t prefix_count(int order);

/// Hierarchical icosahedral mesh.
///
/// Subdivision appends each edge midpoint after all parent vertices, ordered
/// by the sorted (min, max) index pair of the parent edge. The first
/// prefix_count(k) vertices are therefore exactly the order-k mesh, which
/// turns pooling into a slice and up-pooling into zero extension.
///
/// neighbors() holds kRingSize entries per vertex: the distinct 1-ring
/// neighbors counterclockwise as seen from outside, starting at the smallest
/// index. Pentagon vertices repeat their first neighbor in slot 5, and slot 6
/// always repeats slot 0 so the list reads as a closed fan.
class IcosphereMesh {
 public:
  int order() const noexcept { return order_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  std::size_t face_count() const noexcept { return faces_.size(); }

  const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
  const std::vector<std::array<std::uint32_t, 3>>& faces() const noexcept { return faces_; }
  const std::vector<std::size_t>& prefix_counts() const noexcept { return prefix_counts_; }

  // Flat table, kRingSize entries per vertex.
  std::span<const std::uint32_t> neighbor_table() const noexcept { return neighbors_; }
  std::span<const std::uint32_t> neighbors(std::size_t v) const noexcept {
    return {neighbors_.data() + v * kRingSize, kRingSize};
  }
  // 5 or 6.
  int degree(std::size_t v) const noexcept { return degree_[v]; }

  // Vertices reachable within `radius` edges, including v itself, sorted.
  std::vector<std::uint32_t> k_ring(std::size_t v, int radius) const;

 private:
  friend IcosphereMesh build_icosphere(int order);

  int order_ = 0;
  std::size_t edge_count_ = 0;
  std::vector<Vec3> vertices_;
  std::vector<std::array<std::uint32_t, 3>> faces_;
  std::vector<std::uint32_t> neighbors_;
  std::vector<std::uint8_t> degree_;
  std::vector<std::size_t> prefix_counts_;
};

// Throws std::out_of_range unless 0 <= order <= kMaxMeshOrder.
IcosphereMesh build_icosphere(int order);

// Bounds-checked copy of mesh.neighbors(v).
std::array<std::uint32_t, kRingSize> ordered_ring(const IcosphereMesh& mesh, std::size_t v);

struct ROIAtlas {
  int order = 0;
  std::size_t roi_count = 0;
  std::vector<std::uint32_t> labels;

  // Vertex count of every ROI; all entries positive for a valid atlas.
  std::vector<std::size_t> sizes() const;
};

inline constexpr std::size_t kDefaultRoiCount = 34;

// Synthetic parcellation: roi_count distinct seed vertices drawn from `seed`,
// each vertex labeled by its geodesically nearest seed.
ROIAtlas voronoi_atlas(const IcosphereMesh& mesh, std::size_t roi_count, std::uint64_t seed);

// Binary ICRA format: "ICRA", u32 version=1, u32 order, u32 roi_count,
// then one little-endian u32 label per vertex.
void write_atlas(const std::filesystem::path& path, const ROIAtlas& atlas);
ROIAtlas read_atlas(const std::filesystem::path& path);

}  // namespace icodiff
