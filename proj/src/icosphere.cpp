#include "icodiff/icosphere.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "icodiff/binary_io.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/rng.hpp"

namespace icodiff {
namespace {

using Face = std::array<std::uint32_t, 3>;
using Edge = std::pair<std::uint32_t, std::uint32_t>;

Vec3 normalized(const Vec3& p) {
  const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  return {p[0] / n, p[1] / n, p[2] / n};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Canonical base icosahedron. Vertex i sits at the listed golden-ratio
// coordinates, normalized; faces are counterclockwise seen from outside.
void base_icosahedron(std::vector<Vec3>& verts, std::vector<Face>& faces) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const Vec3 raw[12] = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  verts.clear();
  for (const auto& p : raw) verts.push_back(normalized(p));
  faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
           {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (const auto& [a, b, c] : faces) {
    const auto& p = verts[a];
    const auto& q = verts[b];
    const auto& r = verts[c];
    const Vec3 n = cross({q[0] - p[0], q[1] - p[1], q[2] - p[2]}, {r[0] - p[0], r[1] - p[1], r[2] - p[2]});
    if (dot(n, p) <= 0.0) throw std::logic_error("base icosahedron face is not counterclockwise");
  }
}

Edge make_edge(std::uint32_t a, std::uint32_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

std::vector<Edge> unique_edges(const std::vector<Face>& faces) {
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (const auto& f : faces) {
    edges.push_back(make_edge(f[0], f[1]));
    edges.push_back(make_edge(f[1], f[2]));
    edges.push_back(make_edge(f[2], f[0]));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

void subdivide(std::vector<Vec3>& verts, std::vector<Face>& faces) {
  const auto edges = unique_edges(faces);
  const auto parent_count = static_cast<std::uint32_t>(verts.size());
  verts.reserve(verts.size() + edges.size());
  for (const auto& [a, b] : edges) {
    const Vec3& p = verts[a];
    const Vec3& q = verts[b];
    verts.push_back(normalized({p[0] + q[0], p[1] + q[1], p[2] + q[2]}));
  }
  auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), make_edge(a, b));
    return parent_count + static_cast<std::uint32_t>(it - edges.begin());
  };
  std::vector<Face> next;
  next.reserve(faces.size() * 4);
  for (const auto& [a, b, c] : faces) {
    const auto ab = midpoint(a, b);
    const auto bc = midpoint(b, c);
    const auto ca = midpoint(c, a);
    next.push_back({a, ab, ca});
    next.push_back({b, bc, ab});
    next.push_back({c, ca, bc});
    next.push_back({ab, bc, ca});
  }
  faces = std::move(next);
}

}  // namespace

std::size_t prefix_count(int order) {
  if (order < 0 || order > 15) throw std::out_of_range("mesh order out of range: " + std::to_string(order));
  return 10 * (std::size_t{1} << (2 * order)) + 2;
}

IcosphereMesh build_icosphere(int order) {
  if (order < 0 || order > kMaxMeshOrder)
    throw std::out_of_range("mesh order must be in [0, " + std::to_string(kMaxMeshOrder) +
                            "], got " + std::to_string(order));
  IcosphereMesh mesh;
  mesh.order_ = order;
  base_icosahedron(mesh.vertices_, mesh.faces_);
  mesh.prefix_counts_.push_back(mesh.vertices_.size());
  for (int k = 1; k <= order; ++k) {
    subdivide(mesh.vertices_, mesh.faces_);
    mesh.prefix_counts_.push_back(mesh.vertices_.size());
  }

  const std::size_t nv = mesh.vertices_.size();
  // For every face (a, b, c), walking counterclockwise around a goes b -> c.
  std::vector<std::array<Edge, 6>> fan(nv);
  std::vector<std::uint8_t> fan_size(nv, 0);
  for (const auto& [a, b, c] : mesh.faces_) {
    fan[a][fan_size[a]++] = {b, c};
    fan[b][fan_size[b]++] = {c, a};
    fan[c][fan_size[c]++] = {a, b};
  }

  mesh.neighbors_.resize(nv * kRingSize);
  mesh.degree_.resize(nv);
  std::size_t degree_sum = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    const int deg = fan_size[v];
    if (deg != 5 && deg != 6) throw std::logic_error("icosphere vertex with degree " + std::to_string(deg));
    mesh.degree_[v] = static_cast<std::uint8_t>(deg);
    degree_sum += static_cast<std::size_t>(deg);

    std::uint32_t start = fan[v][0].first;
    for (int i = 1; i < deg; ++i) start = std::min(start, fan[v][i].first);
    auto* ring = mesh.neighbors_.data() + v * kRingSize;
    std::uint32_t cur = start;
    for (int i = 0; i < deg; ++i) {
      ring[i] = cur;
      for (int j = 0; j < deg; ++j) {
        if (fan[v][j].first == cur) {
          cur = fan[v][j].second;
          break;
        }
      }
    }
    if (cur != start) throw std::logic_error("icosphere 1-ring is not a closed fan");
    if (deg == 5) ring[5] = ring[0];
    ring[6] = ring[0];
  }
  mesh.edge_count_ = degree_sum / 2;
  return mesh;
}

std::vector<std::uint32_t> IcosphereMesh::k_ring(std::size_t v, int radius) const {
  std::vector<std::uint32_t> frontier{static_cast<std::uint32_t>(v)};
  std::vector<std::uint32_t> seen = frontier;
  for (int r = 0; r < radius; ++r) {
    std::vector<std::uint32_t> next;
    for (auto u : frontier) {
      for (auto w : neighbors(u)) {
        if (std::find(seen.begin(), seen.end(), w) == seen.end()) {
          seen.push_back(w);
          next.push_back(w);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(seen.begin(), seen.end());
  return seen;
}

std::array<std::uint32_t, kRingSize> ordered_ring(const IcosphereMesh& mesh, std::size_t v) {
  if (v >= mesh.vertex_count())
    throw std::out_of_range("vertex index " + std::to_string(v) + " out of range for " +
                            std::to_string(mesh.vertex_count()) + " vertices");
  std::array<std::uint32_t, kRingSize> out;
  const auto ring = mesh.neighbors(v);
  std::copy(ring.begin(), ring.end(), out.begin());
  return out;
}

std::vector<std::size_t> ROIAtlas::sizes() const {
  std::vector<std::size_t> counts(roi_count, 0);
  for (auto l : labels) ++counts.at(l);
  return counts;
}

ROIAtlas voronoi_atlas(const IcosphereMesh& mesh, std::size_t roi_count, std::uint64_t seed) {
  const std::size_t nv = mesh.vertex_count();
  if (roi_count < 1 || roi_count > nv)
    throw std::invalid_argument("roi_count must be in [1, " + std::to_string(nv) + "], got " +
                                std::to_string(roi_count));
  constexpr int kMaxAttempts = 64;
  const auto& pos = mesh.vertices();
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    RandomStream rng(seed, mix_ids({0xA71A5ull, static_cast<std::uint64_t>(attempt)}));
    // Partial Fisher-Yates over vertex ids gives distinct seed vertices.
    std::vector<std::uint32_t> ids(nv);
    for (std::size_t i = 0; i < nv; ++i) ids[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < roi_count; ++i) std::swap(ids[i], ids[i + rng.below(nv - i)]);

    ROIAtlas atlas{mesh.order(), roi_count, std::vector<std::uint32_t>(nv)};
    for (std::size_t v = 0; v < nv; ++v) {
      double best = INFINITY;
      std::uint32_t label = 0;
      for (std::size_t r = 0; r < roi_count; ++r) {
        const double d = std::acos(std::clamp(dot(pos[v], pos[ids[r]]), -1.0, 1.0));
        if (d < best) {
          best = d;
          label = static_cast<std::uint32_t>(r);
        }
      }
      atlas.labels[v] = label;
    }
    const auto counts = atlas.sizes();
    if (std::none_of(counts.begin(), counts.end(), [](std::size_t c) { return c == 0; })) return atlas;
  }
  throw std::runtime_error("voronoi_atlas: could not produce nonempty parcels after " +
                           std::to_string(kMaxAttempts) + " attempts");
}

void write_atlas(const std::filesystem::path& path, const ROIAtlas& atlas) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  io::write_magic(os, "ICRA");
  io::write_u32(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(atlas.order));
  io::write_u32(os, static_cast<std::uint32_t>(atlas.roi_count));
  for (auto l : atlas.labels) io::write_u32(os, l);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ROIAtlas read_atlas(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open atlas " + path.string());
  io::expect_magic(is, "ICRA");
  if (const auto version = io::read_u32(is); version != 1)
    throw FormatError("unsupported ICRA version " + std::to_string(version));
  ROIAtlas atlas;
  atlas.order = static_cast<int>(io::read_u32(is));
  if (atlas.order < 0 || atlas.order > kMaxMeshOrder) throw FormatError("ICRA order out of range");
  atlas.roi_count = io::read_u32(is);
  atlas.labels.resize(prefix_count(atlas.order));
  for (auto& l : atlas.labels) {
    l = io::read_u32(is);
    if (l >= atlas.roi_count) throw FormatError("ICRA label out of range");
  }
  return atlas;
}

}  // namespace icodiff
