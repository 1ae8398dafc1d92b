#pragma once

#include "shellular/common.hpp"
#include "shellular/field.hpp"
#include "shellular/mc_tables.hpp"
#include "shellular/voxel.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>
#include <vector>

namespace shellular {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  double area() const {
    double a = 0.0;
    for (const auto& t : triangles) {
      Vec3 e1 = vertices[t[1]] - vertices[t[0]];
      Vec3 e2 = vertices[t[2]] - vertices[t[0]];
      a += 0.5 * e1.cross(e2).norm();
    }
    return a;
  }

  // Signed volume by the divergence theorem; meaningful for closed meshes.
  double signed_volume() const {
    double v = 0.0;
    for (const auto& t : triangles)
      v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]])) / 6.0;
    return v;
  }
};

// Marching cubes on the zero level set with linear edge interpolation.
// Vertices are welded on global edge keys; corner samples at index r are the
// wrapped copies of index 0, so the mesh closes consistently across the
// periodic boundary when tiled.
inline TriMesh extract_isosurface(const FieldGrid& grid) {
  if (grid.degenerate()) throw DegenerateDesignError("cannot extract isosurface of a degenerate field");
  int r = grid.resolution;
  TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  const auto& off = hex_corner_offsets();

  auto edge_key = [r](int i, int j, int k, int axis) {
    // low-corner lattice coords in [0, r], axis in 0..2
    return ((static_cast<std::uint64_t>(k) * (r + 1) + j) * (r + 1) + i) * 4 + axis;
  };

  auto vertex_on_edge = [&](int ci, int cj, int ck, int axis, double va, double vb) {
    auto key = edge_key(ci, cj, ck, axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double t = (va == vb) ? 0.5 : va / (va - vb);
    Vec3 p(double(ci) / r, double(cj) / r, double(ck) / r);
    p[axis] += t / r;
    auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        double val[8];
        int cube = 0;
        for (int n = 0; n < 8; ++n) {
          val[n] = grid.corner(i + off[n][0], j + off[n][1], k + off[n][2]);
          if (val[n] < 0.0) cube |= 1 << n;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        std::uint32_t ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc::kEdgeTable[cube] & (1 << e))) continue;
          int a = mc::kMcEdgeCorners[e][0], b = mc::kMcEdgeCorners[e][1];
          // identify the edge by its low corner and direction
          Vec3i ca(i + off[a][0], j + off[a][1], k + off[a][2]);
          Vec3i cb(i + off[b][0], j + off[b][1], k + off[b][2]);
          int axis = 0;
          for (int d = 0; d < 3; ++d)
            if (ca[d] != cb[d]) axis = d;
          bool a_low = ca[axis] < cb[axis];
          const Vec3i& lo = a_low ? ca : cb;
          ev[e] = vertex_on_edge(lo[0], lo[1], lo[2], axis, a_low ? val[a] : val[b],
                                 a_low ? val[b] : val[a]);
        }
        for (int t = 0; mc::kTriTable[cube][t] != -1; t += 3) {
          std::array<std::uint32_t, 3> tri = {ev[mc::kTriTable[cube][t]],
                                              ev[mc::kTriTable[cube][t + 1]],
                                              ev[mc::kTriTable[cube][t + 2]]};
          if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
          Vec3 e1 = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
          Vec3 e2 = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
          if (e1.cross(e2).norm() < 1e-12) continue;
          mesh.triangles.push_back(tri);
        }
      }
  if (mesh.triangles.empty()) throw Error("field has no zero crossing: empty isosurface");
  return mesh;
}

// n^3 arrangement of design identifiers with smoothstep partition-of-unity
// blending of width blend_width (cell units) across block boundaries.
struct TileSpec {
  int n = 1;
  double blend_width = 0.1;
  std::vector<std::string> grid;          // n^3 identifiers, x fastest
  std::map<std::string, DesignParams> designs;

  void validate() const {
    if (n < 1) throw ValidationError("tile grid must have n >= 1");
    if (!(blend_width > 0.0 && blend_width <= 0.25))
      throw ValidationError("blend width must lie in (0, 0.25]");
    if (static_cast<int>(grid.size()) != n * n * n)
      throw ValidationError("tile grid must list n^3 identifiers");
    for (const auto& id : grid)
      if (!designs.count(id)) throw ValidationError("tile grid references unknown design '" + id + "'");
  }

  static TileSpec from_json(const json& j) {
    reject_unknown_keys(j, {"n", "blend_width", "grid", "designs"}, "tile spec");
    TileSpec spec;
    spec.n = j.at("n").get<int>();
    spec.blend_width = j.value("blend_width", 0.1);
    for (const auto& g : j.at("grid")) spec.grid.push_back(g.get<std::string>());
    for (auto it = j.at("designs").begin(); it != j.at("designs").end(); ++it)
      spec.designs.emplace(it.key(), DesignParams::from_json(it.value()));
    spec.validate();
    return spec;
  }

  json to_json() const {
    json designs_j = json::object();
    for (const auto& [id, d] : designs) designs_j[id] = d.to_json();
    return json{{"n", n}, {"blend_width", blend_width}, {"grid", grid}, {"designs", designs_j}};
  }
};

// Evaluates the blended field of a tile arrangement at a supercell point in
// [0, n)^3. Weights are a smoothstep partition of unity per axis, periodic
// over the supercell, so uniform tilings reproduce the single-design field
// exactly and the blend is C^1 across block boundaries.
class TileField {
 public:
  explicit TileField(const TileSpec& spec) : spec_(spec) {
    spec.validate();
    for (const auto& [id, params] : spec.designs) {
      index_of_[id] = static_cast<int>(evals_.size());
      evals_.emplace_back(params);
    }
    block_eval_.resize(spec.grid.size());
    for (size_t b = 0; b < spec.grid.size(); ++b) block_eval_[b] = index_of_.at(spec.grid[b]);
  }

  struct BlockWeight {
    int block;
    double weight;
  };

  // Nonzero blend weights at a supercell point (at most 8 blocks).
  std::vector<BlockWeight> weights(const Vec3& p) const {
    const int n = spec_.n;
    const double w = spec_.blend_width;
    int cand[3][2];
    double wt[3][2];
    int ncand[3];
    for (int a = 0; a < 3; ++a) {
      double t = p[a];
      int c = static_cast<int>(std::floor(t));
      c = ((c % n) + n) % n;
      double local = t - std::floor(t);  // in [0,1)
      if (local < w) {
        // ramp shared with the left neighbor
        double s = smoothstep((local + w) / (2.0 * w));
        cand[a][0] = c;
        wt[a][0] = s;
        cand[a][1] = (c + n - 1) % n;
        wt[a][1] = 1.0 - s;
        ncand[a] = 2;
      } else if (local > 1.0 - w) {
        double s = smoothstep((local - (1.0 - w)) / (2.0 * w));
        cand[a][0] = c;
        wt[a][0] = 1.0 - s;
        cand[a][1] = (c + 1) % n;
        wt[a][1] = s;
        ncand[a] = 2;
      } else {
        cand[a][0] = c;
        wt[a][0] = 1.0;
        ncand[a] = 1;
      }
    }
    std::vector<BlockWeight> out;
    out.reserve(8);
    for (int ia = 0; ia < ncand[0]; ++ia)
      for (int ib = 0; ib < ncand[1]; ++ib)
        for (int ic = 0; ic < ncand[2]; ++ic) {
          double weight = wt[0][ia] * wt[1][ib] * wt[2][ic];
          if (weight == 0.0) continue;
          out.push_back({(cand[2][ic] * n + cand[1][ib]) * n + cand[0][ia], weight});
        }
    return out;
  }

  double value(const Vec3& p) const {
    Vec3 cell(p[0] - std::floor(p[0]), p[1] - std::floor(p[1]), p[2] - std::floor(p[2]));
    double total = 0.0;
    double cache[8];
    int cached[8];
    int n_cached = 0;
    for (const auto& [block, weight] : weights(p)) {
      int ev = block_eval_[block];
      double f = 0.0;
      bool hit = false;
      for (int q = 0; q < n_cached; ++q)
        if (cached[q] == ev) {
          f = cache[q];
          hit = true;
          break;
        }
      if (!hit) {
        f = evals_[ev].value(cell);
        cached[n_cached] = ev;
        cache[n_cached] = f;
        ++n_cached;
      }
      total += weight * f;
    }
    return total;
  }

 private:
  static double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
  }

  TileSpec spec_;
  std::vector<FieldEvaluator> evals_;
  std::map<std::string, int> index_of_;
  std::vector<int> block_eval_;
};

inline double blend_tiles(const TileSpec& spec, const Vec3& p) { return TileField(spec).value(p); }

// Isosurface of a tiled arrangement, sampled at r_sub voxels per block.
// Vertices are in supercell units [0, n]^3.
inline TriMesh extract_tile_isosurface(const TileSpec& spec, int r_sub) {
  TileField field(spec);
  int R = spec.n * r_sub;
  FieldGrid grid = sample_grid_fn(
      [&](const Vec3& q) { return field.value(q * double(spec.n)); }, R);
  TriMesh mesh = extract_isosurface(grid);
  for (auto& v : mesh.vertices) v *= double(spec.n);
  return mesh;
}

enum class MeshFormat { StlBinary, Obj };

// Binary STL: 80-byte header, uint32 triangle count, then per triangle a
// float normal, three float vertices and a zero attribute word (50 bytes).
inline void export_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format) {
  if (mesh.triangles.empty()) throw ValidationError("refusing to export an empty mesh");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (format == MeshFormat::StlBinary) {
    char header[80] = {};
    std::strncpy(header, "shellular voxel cell export", sizeof(header) - 1);
    out.write(header, 80);
    std::uint32_t count = static_cast<std::uint32_t>(mesh.triangles.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& t : mesh.triangles) {
      Vec3 e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
      Vec3 e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
      Vec3 nrm = e1.cross(e2);
      double len = nrm.norm();
      if (len > 0.0) nrm /= len;
      float buf[12] = {
          float(nrm[0]), float(nrm[1]), float(nrm[2]),
          float(mesh.vertices[t[0]][0]), float(mesh.vertices[t[0]][1]), float(mesh.vertices[t[0]][2]),
          float(mesh.vertices[t[1]][0]), float(mesh.vertices[t[1]][1]), float(mesh.vertices[t[1]][2]),
          float(mesh.vertices[t[2]][0]), float(mesh.vertices[t[2]][1]), float(mesh.vertices[t[2]][2])};
      out.write(reinterpret_cast<const char*>(buf), 48);
      std::uint16_t attr = 0;
      out.write(reinterpret_cast<const char*>(&attr), 2);
    }
  } else {
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& t : mesh.triangles)
      out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Watertight boundary mesh of the union of voxels with beta >= threshold.
// Faces against absent voxels (and the cell boundary) are emitted; interior
// faces cancel. Intended as the printable solid proxy of the simulated
// voxel model.
inline TriMesh export_solid_voxels(const FieldGrid& grid, const ShellParams& sp, double threshold) {
  sp.validate();
  if (!(threshold > sp.floor_ratio && threshold <= 1.0))
    throw ValidationError("threshold must lie in (floor, 1]");
  if (grid.degenerate()) throw DegenerateDesignError("degenerate field");
  int r = grid.resolution;
  std::vector<std::uint8_t> solid(static_cast<size_t>(r) * r * r, 0);
  size_t n_solid = 0;
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        double beta = step_function(grid.center(i, j, k) / grid.norm, sp);
        if (beta >= threshold) {
          solid[grid.cell_index(i, j, k)] = 1;
          ++n_solid;
        }
      }
  if (n_solid == 0) throw DegenerateDesignError("no voxel reaches the solid threshold");

  TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> corner_vertex;
  auto vertex = [&](int i, int j, int k) {
    std::uint64_t key = (static_cast<std::uint64_t>(k) * (r + 1) + j) * (r + 1) + i;
    auto it = corner_vertex.find(key);
    if (it != corner_vertex.end()) return it->second;
    auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(Vec3(double(i) / r, double(j) / r, double(k) / r));
    corner_vertex.emplace(key, id);
    return id;
  };
  auto occupied = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= r || j >= r || k >= r) return false;
    return solid[grid.cell_index(i, j, k)] != 0;
  };
  // quad corners per face (outward winding), per axis and side
  static const int face_quads[3][2][4][3] = {
      // x- and x+
      {{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}, {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}}},
      // y- and y+
      {{{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}, {{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}}},
      // z- and z+
      {{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}, {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}}};
  static const int steps[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        if (!occupied(i, j, k)) continue;
        for (int axis = 0; axis < 3; ++axis)
          for (int side = 0; side < 2; ++side) {
            int ni = i + (side * 2 - 1) * steps[axis][0];
            int nj = j + (side * 2 - 1) * steps[axis][1];
            int nk = k + (side * 2 - 1) * steps[axis][2];
            if (occupied(ni, nj, nk)) continue;
            std::uint32_t q[4];
            for (int c = 0; c < 4; ++c) {
              const int* d = face_quads[axis][side][c];
              q[c] = vertex(i + d[0], j + d[1], k + d[2]);
            }
            mesh.triangles.push_back({q[0], q[1], q[2]});
            mesh.triangles.push_back({q[0], q[2], q[3]});
          }
      }
  return mesh;
}

}  // namespace shellular
