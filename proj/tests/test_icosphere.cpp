#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <utility>

#include "doctest.h"
#include "icodiff/icosphere.hpp"
#include "icodiff/rng.hpp"

using namespace icodiff;

namespace {

// Independent edge enumeration straight from the face list.
std::set<std::pair<std::uint32_t, std::uint32_t>> edges_from_faces(const IcosphereMesh& mesh) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (const auto& f : mesh.faces())
    for (int i = 0; i < 3; ++i) {
      const auto a = f[i], b = f[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return edges;
}

bool adjacent(const std::set<std::pair<std::uint32_t, std::uint32_t>>& edges, std::uint32_t a, std::uint32_t b) {
  return edges.count({std::min(a, b), std::max(a, b)}) > 0;
}

std::set<std::uint32_t> distinct(std::span<const std::uint32_t> ring) { return {ring.begin(), ring.end()}; }

}  // namespace

TEST_CASE("philox matches the Random123 known-answer vectors") {
  CHECK(Philox(0)({0, 0, 0, 0}) == Philox::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox(0xffffffffffffffffull)({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}) ==
        Philox::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox(0x299f31d0a4093822ull)({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}) ==
        Philox::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("prefix_count closed form") {
  CHECK(prefix_count(0) == 12);
  CHECK(prefix_count(5) == 10242);
  CHECK(prefix_count(6) == 40962);
  CHECK(build_icosphere(5).vertex_count() == prefix_count(5));
}

TEST_CASE("build_icosphere rejects out-of-range orders") {
  CHECK_THROWS_AS(build_icosphere(-1), std::out_of_range);
  CHECK_THROWS_AS(build_icosphere(9), std::out_of_range);
}

TEST_CASE("base icosahedron") {
  const auto mesh = build_icosphere(0);
  REQUIRE(mesh.vertex_count() == 12);
  for (std::size_t v = 0; v < 12; ++v) {
    CHECK(mesh.degree(v) == 5);
    CHECK(distinct(mesh.neighbors(v)).size() == 5);
  }
  const auto ring = ordered_ring(mesh, 0);
  CHECK(distinct(ring).size() == 5);
  CHECK(ring[6] == ring[0]);
  CHECK(ring[5] == ring[0]);
}

TEST_CASE("order 2 counts from brute-force edge enumeration") {
  const auto mesh = build_icosphere(2);
  const auto edges = edges_from_faces(mesh);
  CHECK(mesh.vertex_count() == 162);
  CHECK(edges.size() == 480);
  CHECK(mesh.edge_count() == 480);
  const long euler = long(mesh.vertex_count()) - long(edges.size()) + long(mesh.face_count());
  CHECK(euler == 2);
}

TEST_CASE("mesh invariants for orders 0..4") {
  for (int order = 0; order <= 4; ++order) {
    CAPTURE(order);
    const auto mesh = build_icosphere(order);
    const auto edges = edges_from_faces(mesh);
    const std::size_t p4 = std::size_t{1} << (2 * order);
    CHECK(mesh.vertex_count() == 10 * p4 + 2);
    CHECK(edges.size() == 30 * p4);
    CHECK(mesh.face_count() == 20 * p4);

    int pentagons = 0;
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
      const auto& p = mesh.vertices()[v];
      CHECK(std::abs(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - 1.0) < 1e-12);
      const auto ring = mesh.neighbors(v);
      const auto uniq = distinct(ring);
      pentagons += uniq.size() == 5;
      CHECK((uniq.size() == 5 || uniq.size() == 6));
      CHECK(ring[6] == ring[0]);
      // starts at the smallest neighbor
      CHECK(ring[0] == *uniq.begin());
      for (auto u : uniq) {
        CHECK(adjacent(edges, static_cast<std::uint32_t>(v), u));
        CHECK(distinct(mesh.neighbors(u)).count(static_cast<std::uint32_t>(v)) == 1);
      }
      // closed fan: consecutive distinct neighbors are adjacent
      const int deg = mesh.degree(v);
      for (int i = 0; i < deg; ++i) CHECK(adjacent(edges, ring[i], ring[(i + 1) % deg]));
    }
    CHECK(pentagons == 12);
  }
}

TEST_CASE("ring orientation is counterclockwise seen from outside") {
  const auto mesh = build_icosphere(3);
  const auto& pos = mesh.vertices();
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const auto ring = mesh.neighbors(v);
    const auto& c = pos[v];
    const auto& a = pos[ring[0]];
    const auto& b = pos[ring[1]];
    const double ax = a[0] - c[0], ay = a[1] - c[1], az = a[2] - c[2];
    const double bx = b[0] - c[0], by = b[1] - c[1], bz = b[2] - c[2];
    const double nx = ay * bz - az * by, ny = az * bx - ax * bz, nz = ax * by - ay * bx;
    CHECK(nx * c[0] + ny * c[1] + nz * c[2] > 0.0);
  }
}

TEST_CASE("order-1 hexagon rings close into a 6-cycle") {
  const auto mesh = build_icosphere(1);
  const auto edges = edges_from_faces(mesh);
  for (std::size_t v = 12; v < mesh.vertex_count(); ++v) {
    const auto ring = ordered_ring(mesh, v);
    CHECK(distinct(ring).size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(adjacent(edges, ring[i], ring[i + 1]));
  }
  CHECK_THROWS_AS(ordered_ring(mesh, mesh.vertex_count()), std::out_of_range);
}

TEST_CASE("order-2 ring of vertex 0 stays within the mesh") {
  const auto mesh = build_icosphere(2);
  const auto edges = edges_from_faces(mesh);
  for (auto u : ordered_ring(mesh, 0)) {
    CHECK(u < 162);
    CHECK(adjacent(edges, 0, u));
  }
}

TEST_CASE("prefix property against rebuilt lower orders") {
  const auto fine = build_icosphere(5);
  for (int k = 0; k < 5; ++k) {
    const auto coarse = build_icosphere(k);
    for (std::size_t v = 0; v < coarse.vertex_count(); ++v)
      for (int d = 0; d < 3; ++d) CHECK(std::abs(fine.vertices()[v][d] - coarse.vertices()[v][d]) < 1e-12);
  }
  CHECK(fine.prefix_counts() == std::vector<std::size_t>{12, 42, 162, 642, 2562, 10242});
}

TEST_CASE("construction is deterministic") {
  const auto a = build_icosphere(3);
  const auto b = build_icosphere(3);
  CHECK(a.vertices() == b.vertices());
  CHECK(std::equal(a.neighbor_table().begin(), a.neighbor_table().end(), b.neighbor_table().begin()));
}

TEST_CASE("k_ring sizes") {
  const auto mesh = build_icosphere(3);
  CHECK(mesh.k_ring(0, 0).size() == 1);
  CHECK(mesh.k_ring(0, 1).size() == 6);
  CHECK(mesh.k_ring(500, 1).size() == 7);
  CHECK(mesh.k_ring(500, 2).size() == 19);
}

TEST_CASE("voronoi atlas") {
  SUBCASE("single ROI") {
    const auto atlas = voronoi_atlas(build_icosphere(2), 1, 99);
    CHECK(std::all_of(atlas.labels.begin(), atlas.labels.end(), [](auto l) { return l == 0; }));
  }
  SUBCASE("34 nonempty parcels partition order 4") {
    const auto mesh = build_icosphere(4);
    const auto atlas = voronoi_atlas(mesh, 34, 7);
    REQUIRE(atlas.labels.size() == 2562);
    std::vector<std::size_t> counts(34, 0);
    for (auto l : atlas.labels) {
      REQUIRE(l < 34);
      ++counts[l];
    }
    std::size_t total = 0;
    for (auto c : counts) {
      CHECK(c > 0);
      total += c;
    }
    CHECK(total == 2562);
    CHECK(voronoi_atlas(mesh, 34, 7).labels == atlas.labels);
    CHECK(voronoi_atlas(mesh, 34, 8).labels != atlas.labels);
  }
  SUBCASE("every vertex its own ROI") {
    const auto mesh = build_icosphere(1);
    const auto atlas = voronoi_atlas(mesh, mesh.vertex_count(), 3);
    const auto sizes = atlas.sizes();
    CHECK(std::all_of(sizes.begin(), sizes.end(), [](auto s) { return s == 1; }));
  }
  SUBCASE("invalid roi counts") {
    const auto mesh = build_icosphere(0);
    CHECK_THROWS_AS(voronoi_atlas(mesh, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(voronoi_atlas(mesh, 13, 1), std::invalid_argument);
  }
}

TEST_CASE("atlas file round trip") {
  const auto atlas = voronoi_atlas(build_icosphere(3), 34, 11);
  const auto path = std::filesystem::temp_directory_path() / "icodiff_test_atlas.icra";
  write_atlas(path, atlas);
  CHECK(std::filesystem::file_size(path) == 16 + 4 * 642);
  const auto back = read_atlas(path);
  CHECK(back.order == 3);
  CHECK(back.roi_count == 34);
  CHECK(back.labels == atlas.labels);
  std::filesystem::remove(path);
}
