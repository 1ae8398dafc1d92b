#include <catch2/catch_amalgamated.hpp>

#include "shellular/voxel.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using namespace shellular;

namespace {

// Plane design with zero planes offset off the lattice so surface voxels are
// unambiguous single layers.
DesignParams plane_design_z(double shift) {
  DesignParams p;
  p.symmetry = Symmetry::None;
  p.truncation = 2;
  p.weights.assign(27, 0.0);
  p.weight(0, 0, 1) = 1.0;
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.25 + shift), 1);
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.75 + shift), -1);
  return p;
}

DesignParams seeded_design(std::uint64_t seed) {
  RandomDesignSpec spec;
  spec.symmetry = Symmetry::CubicOctant;
  spec.n_charges_pre_expansion = 4;
  return random_design(spec, seed);
}

// Independent reimplementation of the reduced-mesh element selection:
// full-grid sweep dilation, flip-combination completion, corner forcing.
std::set<std::uint32_t> scan_oracle_elements(const FieldGrid& grid, const ShellParams& sp) {
  int r = grid.resolution;
  size_t total = size_t(r) * r * r;
  std::vector<std::uint8_t> in(total, 0);
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        int pos = 0, neg = 0, zero = 0;
        for (int d = 0; d < 8; ++d) {
          double v = grid.corner(i + (d & 1), j + ((d >> 1) & 1), k + ((d >> 2) & 1));
          (v > 0 ? pos : v < 0 ? neg : zero) = 1;
        }
        if (zero || (pos && neg)) in[VoxelMesh::element_id(i, j, k, r)] = 1;
      }
  for (int layer = 0; layer < sp.layers_for(r); ++layer) {
    std::vector<std::uint8_t> next = in;
    for (int k = 0; k < r; ++k)
      for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i) {
          if (in[VoxelMesh::element_id(i, j, k, r)]) continue;
          bool near = in[VoxelMesh::element_id((i + 1) % r, j, k, r)] ||
                      in[VoxelMesh::element_id((i + r - 1) % r, j, k, r)] ||
                      in[VoxelMesh::element_id(i, (j + 1) % r, k, r)] ||
                      in[VoxelMesh::element_id(i, (j + r - 1) % r, k, r)] ||
                      in[VoxelMesh::element_id(i, j, (k + 1) % r, r)] ||
                      in[VoxelMesh::element_id(i, j, (k + r - 1) % r, r)];
          if (near) next[VoxelMesh::element_id(i, j, k, r)] = 1;
        }
    in = std::move(next);
  }
  std::set<std::uint32_t> out;
  for (size_t e = 0; e < total; ++e)
    if (in[e]) out.insert(std::uint32_t(e));
  // completion
  bool changed = true;
  while (changed) {
    changed = false;
    std::set<std::uint32_t> add;
    for (auto e : out) {
      Vec3i c = VoxelMesh::element_coords(e, r);
      for (int a = 0; a < 3; ++a)
        if (c[a] == 0 || c[a] == r - 1) {
          Vec3i q = c;
          q[a] = (c[a] == 0) ? r - 1 : 0;
          add.insert(VoxelMesh::element_id(q[0], q[1], q[2], r));
        }
    }
    for (auto e : add)
      if (out.insert(e).second) changed = true;
  }
  bool touches = false;
  for (auto e : out) {
    Vec3i c = VoxelMesh::element_coords(e, r);
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == r - 1) touches = true;
  }
  if (touches)
    for (int i : {0, r - 1})
      for (int j : {0, r - 1})
        for (int k : {0, r - 1}) out.insert(VoxelMesh::element_id(i, j, k, r));
  return out;
}

}  // namespace

TEST_CASE("step function hits its anchor values") {
  ShellParams sp;
  sp.sharpness = 500.0;
  sp.floor_ratio = 1e-3;
  CHECK(step_function(0.0, sp) == Catch::Approx(1.0).margin(1e-15));
  CHECK(step_function(10.0, sp) == Catch::Approx(1e-3).margin(1e-9));
  CHECK(step_function(-10.0, sp) == Catch::Approx(1e-3).margin(1e-9));
}

TEST_CASE("step function is monotone around its half height") {
  ShellParams sp;
  sp.sharpness = 140.0;
  sp.floor_ratio = 0.01;
  double target = 0.5 * (1.0 + sp.floor_ratio);
  // bisection oracle for h(v_half) = (1 + floor)/2
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (step_function(mid, sp) > target ? lo : hi) = mid;
  }
  double v_half = 0.5 * (lo + hi);
  CHECK(step_function(v_half, sp) == Catch::Approx(target).margin(1e-10));
  CHECK(step_function(0.5 * v_half, sp) > target);
  CHECK(step_function(2.0 * v_half, sp) < target);
  double prev = step_function(0.0, sp);
  for (double v = 0.01; v < 3.0; v += 0.01) {
    double cur = step_function(v, sp);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("shell parameter validation") {
  ShellParams sp;
  sp.floor_ratio = 1.5;
  CHECK_THROWS_AS(sp.validate(), ValidationError);
  sp.floor_ratio = 0.5;
  sp.sharpness = -1.0;
  CHECK_THROWS_AS(sp.validate(), ValidationError);
  CHECK(ShellParams{}.layers_for(64) == 2);
  CHECK(ShellParams{}.layers_for(32) == 1);
  CHECK(ShellParams{}.layers_for(8) == 1);
}

TEST_CASE("plane design classifies as two single-voxel slabs") {
  int r = 32;
  FieldGrid grid = sample_grid(plane_design_z(0.5 / r), r);
  auto surf = classify_surface_elements(grid);
  CHECK(surf.size() == size_t(2 * r * r));
  std::set<int> layers;
  for (auto e : surf) layers.insert(VoxelMesh::element_coords(e, r)[2]);
  CHECK(layers.size() == 2);
}

TEST_CASE("all-positive field has no surface") {
  FieldGrid grid = sample_grid_fn([](const Vec3&) { return 1.0; }, 8);
  CHECK(classify_surface_elements(grid).empty());
  CHECK_THROWS_AS(build_reduced_mesh(grid, ShellParams{}), DegenerateDesignError);
}

TEST_CASE("degenerate grid rejected") {
  FieldGrid grid = sample_grid_fn([](const Vec3&) { return 0.0; }, 8);
  grid.norm = 0.0;
  CHECK_THROWS_AS(classify_surface_elements(grid), DegenerateDesignError);
}

TEST_CASE("schwarz-p classification matches the brute corner scan") {
  auto p_field = [](const Vec3& q) {
    return std::cos(2 * M_PI * q[0]) + std::cos(2 * M_PI * q[1]) + std::cos(2 * M_PI * q[2]);
  };
  FieldGrid grid = sample_grid_fn(p_field, 32);
  auto surf = classify_surface_elements(grid);
  std::set<std::uint32_t> got(surf.begin(), surf.end());
  std::set<std::uint32_t> want;
  int r = 32;
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        double mn = 1e300, mx = -1e300;
        for (int d = 0; d < 8; ++d) {
          double v = grid.corner(i + (d & 1), j + ((d >> 1) & 1), k + ((d >> 2) & 1));
          mn = std::min(mn, v);
          mx = std::max(mx, v);
        }
        if (mn <= 0.0 && mx >= 0.0) want.insert(VoxelMesh::element_id(i, j, k, r));
      }
  CHECK(got == want);
}

TEST_CASE("reduced mesh matches the independent scan oracle") {
  ShellParams sp;
  for (std::uint64_t seed : {3u, 12u}) {
    FieldGrid grid = sample_grid(seeded_design(seed), 16);
    VoxelMesh mesh = build_reduced_mesh(grid, sp);
    std::set<std::uint32_t> got(mesh.elements.begin(), mesh.elements.end());
    CHECK(got == scan_oracle_elements(grid, sp));
  }
}

TEST_CASE("seeded r=64 reduced mesh fraction lands in the expected band") {
  ShellParams sp;
  sp.expand_layers = 2;
  FieldGrid grid = sample_grid(seeded_design(2024), 64);
  VoxelMesh mesh = build_reduced_mesh(grid, sp);
  double frac = mesh.element_fraction();
  CHECK(frac >= 0.03);
  CHECK(frac <= 0.35);
  std::set<std::uint32_t> got(mesh.elements.begin(), mesh.elements.end());
  CHECK(got == scan_oracle_elements(grid, sp));
}

TEST_CASE("dilation grows monotonically with the layer count") {
  FieldGrid grid = sample_grid(seeded_design(8), 16);
  ShellParams sp1, sp2;
  sp1.expand_layers = 1;
  sp2.expand_layers = 3;
  VoxelMesh m1 = build_reduced_mesh(grid, sp1);
  VoxelMesh m2 = build_reduced_mesh(grid, sp2);
  std::set<std::uint32_t> s2(m2.elements.begin(), m2.elements.end());
  for (auto e : m1.elements) CHECK(s2.count(e) == 1);
  CHECK(m2.elements.size() >= m1.elements.size());
}

TEST_CASE("completion is a fixpoint and groups are full") {
  FieldGrid grid = sample_grid(seeded_design(21), 16);
  VoxelMesh mesh = build_reduced_mesh(grid, ShellParams{});
  int r = mesh.resolution;
  std::set<std::uint32_t> present(mesh.elements.begin(), mesh.elements.end());
  for (auto e : mesh.elements) {
    Vec3i c = VoxelMesh::element_coords(e, r);
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == r - 1) {
        Vec3i q = c;
        q[a] = (c[a] == 0) ? r - 1 : 0;
        CHECK(present.count(VoxelMesh::element_id(q[0], q[1], q[2], r)) == 1);
      }
  }
  for (const auto& g : mesh.periodic_groups) {
    size_t n = 1 + g.slaves.size();
    CHECK((n == 2 || n == 4 || n == 8));
    const Vec3i& m = mesh.node_coords[g.master];
    for (const auto& [node, delta] : g.slaves) {
      const Vec3i& s = mesh.node_coords[node];
      CHECK(s == m + r * delta);
    }
  }
  REQUIRE(mesh.corner_group >= 0);
  CHECK(mesh.periodic_groups[mesh.corner_group].slaves.size() == 7);
}

TEST_CASE("plane mesh pairs every x=0 boundary node with x=r") {
  int r = 32;
  DesignParams p;
  p.symmetry = Symmetry::None;
  p.truncation = 2;
  p.weights.assign(27, 0.0);
  p.weight(1, 0, 0) = 1.0;
  p.charges.emplace_back(Vec3(0.25, 0.5, 0.5), 1);
  p.charges.emplace_back(Vec3(0.75, 0.5, 0.5), -1);
  ShellParams sp;
  sp.expand_layers = 2;
  VoxelMesh mesh = build_reduced_mesh(sample_grid(p, r), sp);
  int face_pairs = 0;
  for (const auto& g : mesh.periodic_groups) {
    const Vec3i& m = mesh.node_coords[g.master];
    if (m[0] == 0 && m[1] % r != 0 && m[2] % r != 0) {
      REQUIRE(g.slaves.size() == 1);
      const Vec3i& s = mesh.node_coords[g.slaves[0].first];
      CHECK(s[0] == r);
      CHECK(s[1] == m[1]);
      CHECK(s[2] == m[2]);
      ++face_pairs;
    }
  }
  CHECK(face_pairs > 0);
}

TEST_CASE("beta stays inside its bounds") {
  FieldGrid grid = sample_grid(seeded_design(77), 16);
  ShellParams sp;
  VoxelMesh mesh = build_reduced_mesh(grid, sp);
  for (double b : mesh.beta) {
    CHECK(b >= sp.floor_ratio);
    CHECK(b <= 1.0);
  }
  CHECK(mesh.volume_ratio() > 0.0);
  CHECK(mesh.volume_ratio() <= 1.0);
}

TEST_CASE("full fallback mesh is flagged") {
  FieldGrid grid = sample_grid(seeded_design(5), 8);
  ShellParams sp;
  sp.expand_layers = 8;
  VoxelMesh mesh = build_reduced_mesh(grid, sp);
  CHECK(mesh.full_fallback);
  CHECK(mesh.elements.size() == 512);
  CHECK(full_solid_mesh(8).full_fallback);
}

TEST_CASE("raw export writes one byte per voxel") {
  FieldGrid grid = sample_grid(seeded_design(9), 8);
  VoxelMesh mesh = build_reduced_mesh(grid, ShellParams{});
  std::string path = "voxel_test_export.raw";
  mesh.write_raw(path);
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  REQUIRE(in.good());
  CHECK(in.tellg() == std::streamoff(512));
  in.seekg(0);
  std::vector<unsigned char> bytes(512);
  in.read(reinterpret_cast<char*>(bytes.data()), 512);
  size_t nonzero = 0;
  for (auto b : bytes) nonzero += b != 0;
  CHECK(nonzero == mesh.elements.size());
  std::remove(path.c_str());

  json j = mesh.to_json();
  CHECK(j["num_elements"] == mesh.elements.size());
  CHECK(j["elements"].size() == mesh.elements.size());
}
