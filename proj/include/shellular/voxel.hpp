#pragma once

#include "shellular/common.hpp"
#include "shellular/field.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>
#include <vector>

namespace shellular {

// Step-function parameters mapping normalized field values to per-element
// stiffness ratios, plus the BFS dilation depth of the reduced mesh.
// expand_layers == 0 selects the resolution-scaled default
// max(1, round(2 r / 64)).
struct ShellParams {
  double sharpness = 500.0;   // k in h(v)
  double floor_ratio = 1e-3;  // 1 - v0/2, the minimum stiffness ratio
  int expand_layers = 0;

  void validate() const {
    if (!(sharpness > 0.0)) throw ValidationError("sharpness must be positive");
    if (!(floor_ratio > 0.0 && floor_ratio < 1.0))
      throw ValidationError("floor must lie in (0, 1)");
    if (expand_layers < 0) throw ValidationError("expand_layers must be >= 0");
  }

  int layers_for(int r) const {
    if (expand_layers > 0) return expand_layers;
    return std::max(1, static_cast<int>(std::lround(2.0 * r / 64.0)));
  }
};

// h(v) = 1 + v0/2 - v0 / (1 + exp(-k v^2)) with v0 = 2 (1 - floor).
// h(0) = 1, h(+-inf) -> floor, monotonically decreasing in |v|.
inline double step_function(double v, const ShellParams& sp) {
  double v0 = 2.0 * (1.0 - sp.floor_ratio);
  return 1.0 + 0.5 * v0 - v0 / (1.0 + std::exp(-sp.sharpness * v * v));
}

enum class NodeClass : std::uint8_t { Interior, Face, Edge, Corner };

struct PeriodicGroup {
  std::uint32_t master = 0;                               // node with all offsets zero
  std::vector<std::pair<std::uint32_t, Vec3i>> slaves;    // (node, lattice offset in {0,1}^3)
};

// Reduced voxel mesh tightly enclosing the zero isosurface: elements with
// per-element stiffness ratios, deduplicated lattice nodes, boundary
// classification and periodic node groups.
struct VoxelMesh {
  int resolution = 0;
  std::vector<std::uint32_t> elements;  // sorted linear ids (k*r + j)*r + i
  std::vector<double> beta;             // per element
  std::vector<std::uint32_t> element_nodes;  // 8 per element
  std::vector<Vec3i> node_coords;            // lattice ints in [0, r]
  std::vector<NodeClass> node_class;
  std::vector<PeriodicGroup> periodic_groups;
  int corner_group = -1;  // index into periodic_groups, -1 if absent
  bool full_fallback = false;
  double t_select_ms = 0.0;    // element selection + beta
  double t_topology_ms = 0.0;  // node dedup + periodic pairing

  size_t num_elements() const { return elements.size(); }
  size_t num_nodes() const { return node_coords.size(); }

  double element_fraction() const {
    double total = double(resolution) * resolution * resolution;
    return double(elements.size()) / total;
  }

  double volume_ratio() const {
    double s = 0.0;
    for (double b : beta) s += b;
    return s / (double(resolution) * resolution * resolution);
  }

  static std::uint32_t element_id(int i, int j, int k, int r) {
    return static_cast<std::uint32_t>((k * r + j) * r + i);
  }
  static Vec3i element_coords(std::uint32_t id, int r) {
    int i = id % r;
    int j = (id / r) % r;
    int k = id / (r * r);
    return Vec3i(i, j, k);
  }

  json to_json() const {
    json elems = json::array();
    for (size_t e = 0; e < elements.size(); ++e) {
      Vec3i c = element_coords(elements[e], resolution);
      elems.push_back(json{{"ijk", {c[0], c[1], c[2]}}, {"beta", beta[e]}});
    }
    return json{{"resolution", resolution},
                {"num_elements", elements.size()},
                {"num_nodes", node_coords.size()},
                {"element_fraction", element_fraction()},
                {"volume_ratio", volume_ratio()},
                {"full_fallback", full_fallback},
                {"elements", elems}};
  }

  // r^3 occupancy bytes: 0 = absent, 1..255 = quantized beta.
  void write_raw(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    std::vector<std::uint8_t> occ(static_cast<size_t>(resolution) * resolution * resolution, 0);
    for (size_t e = 0; e < elements.size(); ++e)
      occ[elements[e]] = static_cast<std::uint8_t>(1 + std::lround(beta[e] * 254.0));
    out.write(reinterpret_cast<const char*>(occ.data()), static_cast<std::streamsize>(occ.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
  }
};

// Elements whose 8 corner samples are not all of one strict sign.
inline std::vector<std::uint32_t> classify_surface_elements(const FieldGrid& grid) {
  if (grid.degenerate())
    throw DegenerateDesignError("cannot classify surface elements of a degenerate field");
  int r = grid.resolution;
  std::vector<std::uint32_t> out;
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        bool pos = false, neg = false, zero = false;
        for (int dk = 0; dk < 2; ++dk)
          for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
              double v = grid.corner(i + di, j + dj, k + dk);
              if (v > 0.0)
                pos = true;
              else if (v < 0.0)
                neg = true;
              else
                zero = true;
            }
        if (zero || (pos && neg)) out.push_back(VoxelMesh::element_id(i, j, k, r));
      }
  return out;
}

namespace detail {

// Deduplicates lattice nodes, classifies them against the cell boundary and
// builds the periodic groups by exact integer matching.
inline void build_topology(VoxelMesh& mesh) {
  int r = mesh.resolution;
  auto pack = [r](int i, int j, int k) {
    return (static_cast<std::uint64_t>(k) * (r + 1) + j) * (r + 1) + i;
  };
  std::unordered_map<std::uint64_t, std::uint32_t> node_of;
  node_of.reserve(mesh.elements.size() * 2);
  mesh.element_nodes.assign(mesh.elements.size() * 8, 0);
  // Local corner order matches the trilinear element stiffness matrix:
  // bottom loop (z) 0-1-2-3 counterclockwise, top loop 4-5-6-7.
  static const int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  for (size_t e = 0; e < mesh.elements.size(); ++e) {
    Vec3i c = VoxelMesh::element_coords(mesh.elements[e], r);
    for (int n = 0; n < 8; ++n) {
      int i = c[0] + off[n][0], j = c[1] + off[n][1], k = c[2] + off[n][2];
      auto key = pack(i, j, k);
      auto it = node_of.find(key);
      std::uint32_t id;
      if (it == node_of.end()) {
        id = static_cast<std::uint32_t>(mesh.node_coords.size());
        node_of.emplace(key, id);
        mesh.node_coords.emplace_back(i, j, k);
      } else {
        id = it->second;
      }
      mesh.element_nodes[e * 8 + n] = id;
    }
  }

  mesh.node_class.resize(mesh.node_coords.size());
  for (size_t n = 0; n < mesh.node_coords.size(); ++n) {
    const Vec3i& c = mesh.node_coords[n];
    int b = 0;
    for (int a = 0; a < 3; ++a) b += (c[a] == 0 || c[a] == r);
    mesh.node_class[n] = b == 0 ? NodeClass::Interior
                       : b == 1 ? NodeClass::Face
                       : b == 2 ? NodeClass::Edge
                                : NodeClass::Corner;
  }

  // Group boundary nodes by canonical (mod r) lattice key.
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  for (size_t n = 0; n < mesh.node_coords.size(); ++n) {
    if (mesh.node_class[n] == NodeClass::Interior) continue;
    const Vec3i& c = mesh.node_coords[n];
    buckets[pack(c[0] % r, c[1] % r, c[2] % r)].push_back(static_cast<std::uint32_t>(n));
  }
  std::vector<std::uint64_t> keys;
  keys.reserve(buckets.size());
  for (const auto& kv : buckets) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());

  for (auto key : keys) {
    const auto& members = buckets[key];
    PeriodicGroup g;
    bool found_master = false;
    for (auto n : members) {
      const Vec3i& c = mesh.node_coords[n];
      Vec3i delta(c[0] == r, c[1] == r, c[2] == r);
      if (delta == Vec3i::Zero()) {
        g.master = n;
        found_master = true;
      } else {
        g.slaves.emplace_back(n, delta);
      }
    }
    if (!found_master)
      throw SolverError("periodic group without master node: mesh is not periodically complete");
    int boundary_axes = 0;
    {
      const Vec3i& c = mesh.node_coords[g.master];
      for (int a = 0; a < 3; ++a) boundary_axes += (c[a] % r == 0);
    }
    size_t expect = (1u << boundary_axes);
    if (members.size() != expect)
      throw SolverError("periodic group has " + std::to_string(members.size()) +
                        " members, expected " + std::to_string(expect));
    if (boundary_axes == 3) mesh.corner_group = static_cast<int>(mesh.periodic_groups.size());
    mesh.periodic_groups.push_back(std::move(g));
  }
}

}  // namespace detail

// Surface elements dilated by L BFS layers under periodic 6-connectivity,
// then completed so every boundary element has its periodic images, with
// beta from the step function on normalized center samples.
inline VoxelMesh build_reduced_mesh(const FieldGrid& grid, const ShellParams& sp) {
  sp.validate();
  Timer timer;
  int r = grid.resolution;
  std::vector<std::uint32_t> surface = classify_surface_elements(grid);
  if (surface.empty())
    throw DegenerateDesignError("field has no zero crossing: no surface to mesh");

  size_t total = static_cast<size_t>(r) * r * r;
  std::vector<std::uint8_t> in(total, 0);
  std::vector<std::uint32_t> frontier = surface;
  for (auto e : surface) in[e] = 1;
  int layers = sp.layers_for(r);
  for (int layer = 0; layer < layers; ++layer) {
    std::vector<std::uint32_t> next;
    for (auto e : frontier) {
      Vec3i c = VoxelMesh::element_coords(e, r);
      for (int a = 0; a < 3; ++a)
        for (int d : {-1, 1}) {
          Vec3i q = c;
          q[a] = (q[a] + d + r) % r;
          std::uint32_t id = VoxelMesh::element_id(q[0], q[1], q[2], r);
          if (!in[id]) {
            in[id] = 1;
            next.push_back(id);
          }
        }
    }
    frontier = std::move(next);
  }

  // Periodic completion: boundary elements get all images with boundary-layer
  // indices flipped to the opposite side. One pass is a fixpoint because the
  // flip combinations are closed under further flips.
  for (size_t e = 0; e < total; ++e) {
    if (!in[e]) continue;
    Vec3i c = VoxelMesh::element_coords(static_cast<std::uint32_t>(e), r);
    int flips[3];
    int nf = 0;
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == r - 1) flips[nf++] = a;
    for (int mask = 1; mask < (1 << nf); ++mask) {
      Vec3i q = c;
      for (int b = 0; b < nf; ++b)
        if (mask & (1 << b)) q[flips[b]] = (q[flips[b]] == 0) ? r - 1 : 0;
      in[VoxelMesh::element_id(q[0], q[1], q[2], r)] = 1;
    }
  }

  // If the mesh touches the cell boundary at all, force the 8 corner voxels
  // in so the corner node group exists for gauge prescription.
  bool touches_boundary = false;
  for (size_t e = 0; e < total && !touches_boundary; ++e) {
    if (!in[e]) continue;
    Vec3i c = VoxelMesh::element_coords(static_cast<std::uint32_t>(e), r);
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == r - 1) touches_boundary = true;
  }
  if (touches_boundary)
    for (int i : {0, r - 1})
      for (int j : {0, r - 1})
        for (int k : {0, r - 1}) in[VoxelMesh::element_id(i, j, k, r)] = 1;

  VoxelMesh mesh;
  mesh.resolution = r;
  for (size_t e = 0; e < total; ++e)
    if (in[e]) mesh.elements.push_back(static_cast<std::uint32_t>(e));
  mesh.full_fallback = mesh.elements.size() == total;

  mesh.beta.resize(mesh.elements.size());
  for (size_t e = 0; e < mesh.elements.size(); ++e)
    mesh.beta[e] = step_function(grid.samples[mesh.elements[e]] / grid.norm, sp);
  mesh.t_select_ms = timer.elapsed_ms();

  timer.reset();
  detail::build_topology(mesh);
  mesh.t_topology_ms = timer.elapsed_ms();
  return mesh;
}

// Full-cell mesh with uniform beta; debug fixture for solid-material checks.
inline VoxelMesh full_solid_mesh(int r, double beta_value = 1.0) {
  VoxelMesh mesh;
  mesh.resolution = r;
  size_t total = static_cast<size_t>(r) * r * r;
  mesh.elements.resize(total);
  for (size_t e = 0; e < total; ++e) mesh.elements[e] = static_cast<std::uint32_t>(e);
  mesh.beta.assign(total, beta_value);
  mesh.full_fallback = true;
  detail::build_topology(mesh);
  return mesh;
}

// Full-cell mesh with beta from the field, i.e. the reduced mesh's
// floor-everywhere counterpart.
inline VoxelMesh full_field_mesh(const FieldGrid& grid, const ShellParams& sp) {
  sp.validate();
  if (grid.degenerate()) throw DegenerateDesignError("degenerate field");
  VoxelMesh mesh = full_solid_mesh(grid.resolution, 1.0);
  for (size_t e = 0; e < mesh.elements.size(); ++e)
    mesh.beta[e] = step_function(grid.samples[e] / grid.norm, sp);
  return mesh;
}

}  // namespace shellular
