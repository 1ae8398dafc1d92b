#pragma once

#include "shellular/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace shellular {

enum class Symmetry { None, CubicOctant, Tetrahedral };

inline std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::None: return "none";
    case Symmetry::CubicOctant: return "cubic_octant";
    case Symmetry::Tetrahedral: return "tetrahedral";
  }
  return "none";
}

inline Symmetry symmetry_from_string(const std::string& s) {
  if (s == "none") return Symmetry::None;
  if (s == "cubic_octant") return Symmetry::CubicOctant;
  if (s == "tetrahedral") return Symmetry::Tetrahedral;
  throw ValidationError("unknown symmetry mode '" + s + "'");
}

// Series weight for the (h,k,l) cosine basis term. The all-nonzero case is
// weighted 1 (configurable here in one place; see README for the rationale).
inline double basis_weight(int h, int k, int l) {
  if (h < 0 || k < 0 || l < 0) throw ValidationError("basis_weight: negative index");
  int zeros = (h == 0) + (k == 0) + (l == 0);
  if (zeros == 3) throw ValidationError("basis_weight: (0,0,0) term is excluded");
  if (zeros == 1) return 0.5;
  if (zeros == 2) return 0.25;
  return 1.0;
}

struct Charge {
  Vec3 position = Vec3::Zero();  // unit-cell coordinates, wrapped into [0,1)
  int sign = 1;                  // +1 or -1

  Charge() = default;
  Charge(const Vec3& p, int s) : sign(s) {
    if (s != 1 && s != -1) throw ValidationError("charge sign must be +1 or -1");
    for (int a = 0; a < 3; ++a) {
      double v = p[a] - std::floor(p[a]);
      if (v >= 1.0) v -= 1.0;  // guard against floor rounding at exact integers
      position[a] = v;
    }
  }
};

// Mirror/rotation operators of the symmetry group, acting about the cell
// center (0.5, 0.5, 0.5). CubicOctant uses the 8 axis reflections;
// Tetrahedral uses the full 48-element octahedral group (all signed
// permutation matrices).
inline const std::vector<Mat3>& symmetry_operators(Symmetry s) {
  static const std::vector<Mat3> identity = {Mat3::Identity()};
  static const std::vector<Mat3> octant = [] {
    std::vector<Mat3> ops;
    for (int sx : {1, -1})
      for (int sy : {1, -1})
        for (int sz : {1, -1}) {
          Mat3 m = Mat3::Zero();
          m(0, 0) = sx;
          m(1, 1) = sy;
          m(2, 2) = sz;
          ops.push_back(m);
        }
    return ops;
  }();
  static const std::vector<Mat3> octahedral = [] {
    std::vector<Mat3> ops;
    int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (auto& p : perms)
      for (int sx : {1, -1})
        for (int sy : {1, -1})
          for (int sz : {1, -1}) {
            Mat3 m = Mat3::Zero();
            m(0, p[0]) = sx;
            m(1, p[1]) = sy;
            m(2, p[2]) = sz;
            ops.push_back(m);
          }
    return ops;
  }();
  switch (s) {
    case Symmetry::None: return identity;
    case Symmetry::CubicOctant: return octant;
    case Symmetry::Tetrahedral: return octahedral;
  }
  return identity;
}

inline bool in_fundamental_volume(Symmetry s, const Vec3& p, double eps = 1e-9) {
  switch (s) {
    case Symmetry::None:
      return p[0] >= -eps && p[0] < 1.0 + eps && p[1] >= -eps && p[1] < 1.0 + eps &&
             p[2] >= -eps && p[2] < 1.0 + eps;
    case Symmetry::CubicOctant:
      return p.minCoeff() >= -eps && p.maxCoeff() <= 0.5 + eps;
    case Symmetry::Tetrahedral:
      return p[2] >= -eps && p[2] <= p[1] + eps && p[1] <= p[0] + eps && p[0] <= 0.5 + eps;
  }
  return false;
}

// Maps an arbitrary point of the unit cell into the fundamental volume by a
// group operation. Used to canonicalize optimizer iterates.
inline Vec3 fold_into_fbv(Symmetry s, const Vec3& p) {
  Vec3 q = p;
  for (int a = 0; a < 3; ++a) q[a] -= std::floor(q[a]);
  if (s == Symmetry::None) return q;
  for (int a = 0; a < 3; ++a)
    if (q[a] > 0.5) q[a] = 1.0 - q[a];
  if (s == Symmetry::CubicOctant) return q;
  std::sort(q.data(), q.data() + 3, std::greater<double>());  // x >= y >= z
  return q;
}

// The design space: charge positions/signs (pre-expansion when a symmetry
// mode is set), the basis weights alpha_{hkl} for 0 <= h,k,l <= K, and the
// truncation order K. weights is stored flat over (h,k,l) with the (0,0,0)
// slot fixed at zero.
struct DesignParams {
  Symmetry symmetry = Symmetry::None;
  int truncation = 2;  // K
  std::vector<Charge> charges;
  std::vector<double> weights;  // size (K+1)^3, weights[0] == 0

  int weight_index(int h, int k, int l) const {
    int n = truncation + 1;
    return (h * n + k) * n + l;
  }
  double weight(int h, int k, int l) const { return weights[weight_index(h, k, l)]; }
  double& weight(int h, int k, int l) { return weights[weight_index(h, k, l)]; }

  int num_weight_terms() const {
    int n = truncation + 1;
    return n * n * n - 1;
  }

  void validate() const {
    if (truncation < 0) throw ValidationError("truncation order K must be >= 0");
    int n = truncation + 1;
    if (static_cast<int>(weights.size()) != n * n * n)
      throw ValidationError("weights must have (K+1)^3 slots");
    if (weights[0] != 0.0) throw ValidationError("the (0,0,0) weight must be zero");
    int plus = 0, minus = 0;
    for (const auto& c : charges) {
      if (c.sign == 1)
        ++plus;
      else if (c.sign == -1)
        ++minus;
      else
        throw ValidationError("charge sign must be +1 or -1");
      if (!in_fundamental_volume(symmetry, c.position))
        throw ValidationError("charge at (" + std::to_string(c.position[0]) + ", " +
                              std::to_string(c.position[1]) + ", " +
                              std::to_string(c.position[2]) +
                              ") lies outside the fundamental bounding volume");
    }
    if (plus != minus)
      throw ValidationError("charge counts must balance: " + std::to_string(plus) + " positive vs " +
                            std::to_string(minus) + " negative");
  }

  json to_json() const {
    json charges_j = json::array();
    for (const auto& c : charges)
      charges_j.push_back(json{{"p", {c.position[0], c.position[1], c.position[2]}}, {"q", c.sign}});
    json alpha = json::object();
    int n = truncation + 1;
    for (int h = 0; h < n; ++h)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          if (h == 0 && k == 0 && l == 0) continue;
          char key[32];
          std::snprintf(key, sizeof(key), "%d,%d,%d", h, k, l);
          alpha[key] = weight(h, k, l);
        }
    return json{{"symmetry", to_string(symmetry)},
                {"K", truncation},
                {"charges", charges_j},
                {"alpha", alpha}};
  }

  static DesignParams from_json(const json& j) {
    reject_unknown_keys(j, {"symmetry", "K", "charges", "alpha"}, "design");
    for (const char* key : {"symmetry", "K", "charges", "alpha"})
      if (!j.contains(key)) throw ValidationError(std::string("design: missing key '") + key + "'");
    DesignParams p;
    p.symmetry = symmetry_from_string(j.at("symmetry").get<std::string>());
    p.truncation = j.at("K").get<int>();
    if (p.truncation < 0) throw ValidationError("design: K must be >= 0");
    int n = p.truncation + 1;
    p.weights.assign(static_cast<size_t>(n) * n * n, 0.0);
    const json& alpha = j.at("alpha");
    if (!alpha.is_object()) throw ValidationError("design: alpha must be an object");
    int seen = 0;
    for (auto it = alpha.begin(); it != alpha.end(); ++it) {
      int h, k, l;
      if (std::sscanf(it.key().c_str(), "%d,%d,%d", &h, &k, &l) != 3)
        throw ValidationError("design: bad alpha key '" + it.key() + "'");
      if (h < 0 || k < 0 || l < 0 || h > p.truncation || k > p.truncation || l > p.truncation)
        throw ValidationError("design: alpha index out of range in '" + it.key() + "'");
      if (h == 0 && k == 0 && l == 0)
        throw ValidationError("design: alpha must not contain the (0,0,0) term");
      p.weight(h, k, l) = it.value().get<double>();
      ++seen;
    }
    if (seen != p.num_weight_terms())
      throw ValidationError("design: alpha must have exactly (K+1)^3-1 entries, got " +
                            std::to_string(seen));
    for (const auto& cj : j.at("charges")) {
      reject_unknown_keys(cj, {"p", "q"}, "design charge");
      auto pos = cj.at("p");
      if (!pos.is_array() || pos.size() != 3) throw ValidationError("design: charge p must be [x,y,z]");
      p.charges.emplace_back(Vec3(pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()),
                             cj.at("q").get<int>());
    }
    p.validate();
    return p;
  }
};

// Replaces each fundamental-volume charge by its full orbit under the
// symmetry group. Coincident images (charges sitting on a mirror plane) are
// kept as repeated charges so the expansion multiplicity is constant.
inline DesignParams expand_symmetry(const DesignParams& params) {
  params.validate();
  if (params.symmetry == Symmetry::None) return params;
  const auto& ops = symmetry_operators(params.symmetry);
  DesignParams out = params;
  out.symmetry = Symmetry::None;
  out.charges.clear();
  out.charges.reserve(params.charges.size() * ops.size());
  const Vec3 center(0.5, 0.5, 0.5);
  for (const auto& c : params.charges)
    for (const auto& op : ops)
      out.charges.emplace_back(center + op * (c.position - center), c.sign);
  return out;
}

// Gradient of F with respect to the pre-expansion parameters: one 3-vector
// per charge (accumulated over mirror images by the chain rule) and one
// entry per basis weight.
struct FieldGradient {
  std::vector<Vec3> d_position;
  std::vector<double> d_weight;  // flat (K+1)^3, slot 0 unused
};

// Evaluates the truncated charge-potential series and its parameter
// gradients. Construction precomputes the per-term coefficients
// alpha_{hkl} w_{hkl} / (h^2+k^2+l^2); evaluation uses Chebyshev recurrences
// so each (point, charge) pair costs three sincos calls plus (K+1)^3 fused
// multiply-adds.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const DesignParams& params)
      : pre_(params), expanded_(expand_symmetry(params)), K_(params.truncation) {
    int n = K_ + 1;
    coeff_.assign(static_cast<size_t>(n) * n * n, 0.0);
    base_.assign(coeff_.size(), 0.0);
    for (int h = 0; h < n; ++h)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          if (h == 0 && k == 0 && l == 0) continue;
          double b = basis_weight(h, k, l) / double(h * h + k * k + l * l);
          int idx = (h * n + k) * n + l;
          base_[idx] = b;
          coeff_[idx] = params.weights[idx] * b;
        }
    const auto& ops = symmetry_operators(params.symmetry);
    n_images_ = static_cast<int>(ops.size());
  }

  const DesignParams& expanded() const { return expanded_; }
  const DesignParams& params() const { return pre_; }

  double value(const Vec3& p) const { return value(p[0], p[1], p[2]); }

  double value(double x, double y, double z) const {
    int n = K_ + 1;
    double cx[kMaxOrder], cy[kMaxOrder], cz[kMaxOrder];
    double acc = 0.0;
    for (const auto& c : expanded_.charges) {
      cosines(x - c.position[0], n, cx);
      cosines(y - c.position[1], n, cy);
      cosines(z - c.position[2], n, cz);
      double s = 0.0;
      for (int h = 0; h < n; ++h) {
        double sh = 0.0;
        const double* row = coeff_.data() + h * n * n;
        for (int k = 0; k < n; ++k) {
          double sl = 0.0;
          const double* cell = row + k * n;
          for (int l = 0; l < n; ++l) sl += cell[l] * cz[l];
          sh += cy[k] * sl;
        }
        s += cx[h] * sh;
      }
      acc += c.sign * s;
    }
    return acc;
  }

  FieldGradient gradient(const Vec3& p) const {
    int n = K_ + 1;
    FieldGradient g;
    g.d_position.assign(pre_.charges.size(), Vec3::Zero());
    g.d_weight.assign(coeff_.size(), 0.0);
    const auto& ops = symmetry_operators(pre_.symmetry);
    double cx[kMaxOrder], cy[kMaxOrder], cz[kMaxOrder];
    double sx[kMaxOrder], sy[kMaxOrder], sz[kMaxOrder];
    for (size_t j = 0; j < pre_.charges.size(); ++j) {
      for (size_t m = 0; m < ops.size(); ++m) {
        const Charge& img = expanded_.charges[j * ops.size() + m];
        double q = img.sign;
        trig(p[0] - img.position[0], n, cx, sx);
        trig(p[1] - img.position[1], n, cy, sy);
        trig(p[2] - img.position[2], n, cz, sz);
        Vec3 d = Vec3::Zero();
        for (int h = 0; h < n; ++h)
          for (int k = 0; k < n; ++k) {
            const int rowi = (h * n + k) * n;
            for (int l = 0; l < n; ++l) {
              int idx = rowi + l;
              double cb = coeff_[idx];
              if (cb == 0.0 && base_[idx] == 0.0) continue;
              double pxyz = cx[h] * cy[k] * cz[l];
              g.d_weight[idx] += q * base_[idx] * pxyz;
              // d/dx_j of cos(2 pi h (x - x_j)) = +2 pi h sin(2 pi h (x - x_j))
              d[0] += cb * (2.0 * M_PI * h) * sx[h] * cy[k] * cz[l];
              d[1] += cb * cx[h] * (2.0 * M_PI * k) * sy[k] * cz[l];
              d[2] += cb * cx[h] * cy[k] * (2.0 * M_PI * l) * sz[l];
            }
          }
        g.d_position[j] += q * (ops[m].transpose() * d);
      }
    }
    return g;
  }

  static constexpr int kMaxOrder = 17;  // supports K up to 16

 private:
  static void cosines(double d, int n, double* c) {
    c[0] = 1.0;
    if (n == 1) return;
    double a = 2.0 * M_PI * d;
    double c1 = std::cos(a);
    c[1] = c1;
    for (int h = 2; h < n; ++h) c[h] = 2.0 * c1 * c[h - 1] - c[h - 2];
  }

  static void trig(double d, int n, double* c, double* s) {
    c[0] = 1.0;
    s[0] = 0.0;
    if (n == 1) return;
    double a = 2.0 * M_PI * d;
    double c1 = std::cos(a), s1 = std::sin(a);
    c[1] = c1;
    s[1] = s1;
    for (int h = 2; h < n; ++h) {
      c[h] = 2.0 * c1 * c[h - 1] - c[h - 2];
      s[h] = 2.0 * c1 * s[h - 1] - s[h - 2];
    }
  }

  DesignParams pre_;
  DesignParams expanded_;
  int K_;
  int n_images_ = 1;
  std::vector<double> coeff_;  // alpha * w / (h^2+k^2+l^2)
  std::vector<double> base_;   // w / (h^2+k^2+l^2)
};

inline double eval_field(const DesignParams& params, const Vec3& p) {
  return FieldEvaluator(params).value(p);
}

inline FieldGradient eval_field_gradient(const DesignParams& params, const Vec3& p) {
  return FieldEvaluator(params).gradient(p);
}

// Scalar samples of F on an r^3 periodic grid. Center samples drive the
// element stiffness ratios; corner samples drive surface classification and
// isosurface extraction. The corner array carries the wrapped copies at
// index r so periodic closure is exact by construction.
struct FieldGrid {
  int resolution = 0;
  std::vector<double> samples;         // r^3, at voxel centers
  std::vector<double> corner_samples;  // (r+1)^3
  double norm = 0.0;                   // max |center sample|

  bool degenerate() const { return norm == 0.0; }

  size_t cell_index(int i, int j, int k) const {
    int r = resolution;
    return (static_cast<size_t>(k) * r + j) * r + i;
  }
  size_t corner_index(int i, int j, int k) const {
    int r1 = resolution + 1;
    return (static_cast<size_t>(k) * r1 + j) * r1 + i;
  }
  double corner(int i, int j, int k) const { return corner_samples[corner_index(i, j, k)]; }
  double center(int i, int j, int k) const { return samples[cell_index(i, j, k)]; }
};

namespace detail {

// Grid sampling with per-axis cosine tables: cos(2 pi h (t - c)) is
// precomputed for every lattice abscissa t, charge c and order h, so the
// inner loop over grid points is pure fused multiply-adds.
class GridSampler {
 public:
  GridSampler(const DesignParams& expanded, const std::vector<double>& coeff, int K, int r)
      : charges_(expanded.charges), coeff_(coeff), n_(K + 1), r_(r) {
    size_t nc = charges_.size();
    // Axis tables: [charge][axis][coord][h]; coords 0..r-1 are centers,
    // r..2r-1 are corners (corner r wraps to corner 0).
    tab_.resize(nc * 3 * (2 * static_cast<size_t>(r)) * n_);
    for (size_t c = 0; c < nc; ++c)
      for (int axis = 0; axis < 3; ++axis) {
        double pos = charges_[c].position[axis];
        for (int i = 0; i < 2 * r; ++i) {
          double t = (i < r) ? (i + 0.5) / r : double(i - r) / r;
          double* dst = at(c, axis, i);
          dst[0] = 1.0;
          if (n_ > 1) {
            double a = 2.0 * M_PI * (t - pos);
            double c1 = std::cos(a);
            dst[1] = c1;
            for (int h = 2; h < n_; ++h) dst[h] = 2.0 * c1 * dst[h - 1] - dst[h - 2];
          }
        }
      }
  }

  // it{x,y,z}: table coordinate index (center i -> i, corner i -> r + i%r).
  double eval(int ix, int iy, int iz) const {
    double acc = 0.0;
    for (size_t c = 0; c < charges_.size(); ++c) {
      const double* cx = at(c, 0, ix);
      const double* cy = at(c, 1, iy);
      const double* cz = at(c, 2, iz);
      double s = 0.0;
      for (int h = 0; h < n_; ++h) {
        double sh = 0.0;
        const double* row = coeff_.data() + h * n_ * n_;
        for (int k = 0; k < n_; ++k) {
          double sl = 0.0;
          const double* cell = row + k * n_;
          for (int l = 0; l < n_; ++l) sl += cell[l] * cz[l];
          sh += cy[k] * sl;
        }
        s += cx[h] * sh;
      }
      acc += charges_[c].sign * s;
    }
    return acc;
  }

 private:
  const double* at(size_t c, int axis, int i) const {
    return tab_.data() + (((c * 3 + axis) * (2 * r_)) + i) * n_;
  }
  double* at(size_t c, int axis, int i) {
    return const_cast<double*>(static_cast<const GridSampler*>(this)->at(c, axis, i));
  }

  const std::vector<Charge>& charges_;
  const std::vector<double>& coeff_;
  int n_;
  int r_;
  std::vector<double> tab_;
};

}  // namespace detail

inline FieldGrid sample_grid(const DesignParams& params, int r, int threads = 0) {
  if (r < 4) throw ValidationError("grid resolution must be >= 4");
  FieldEvaluator ev(params);
  // Rebuild coefficients here to feed the table sampler.
  int n = params.truncation + 1;
  std::vector<double> coeff(static_cast<size_t>(n) * n * n, 0.0);
  for (int h = 0; h < n; ++h)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        if (h == 0 && k == 0 && l == 0) continue;
        int idx = (h * n + k) * n + l;
        coeff[idx] = params.weights[idx] * basis_weight(h, k, l) / double(h * h + k * k + l * l);
      }
  detail::GridSampler sampler(ev.expanded(), coeff, params.truncation, r);

  FieldGrid grid;
  grid.resolution = r;
  grid.samples.assign(static_cast<size_t>(r) * r * r, 0.0);
  grid.corner_samples.assign(static_cast<size_t>(r + 1) * (r + 1) * (r + 1), 0.0);

  parallel_for(r, threads, [&](std::int64_t k0, std::int64_t k1) {
    for (int k = static_cast<int>(k0); k < static_cast<int>(k1); ++k)
      for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i)
          grid.samples[grid.cell_index(i, j, k)] = sampler.eval(i, j, k);
  });
  parallel_for(r, threads, [&](std::int64_t k0, std::int64_t k1) {
    for (int k = static_cast<int>(k0); k < static_cast<int>(k1); ++k)
      for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i)
          grid.corner_samples[grid.corner_index(i, j, k)] = sampler.eval(r + i, r + j, r + k);
  });
  // Wrapped copies close the periodic faces exactly.
  int r1 = r + 1;
  for (int k = 0; k < r1; ++k)
    for (int j = 0; j < r1; ++j)
      for (int i = 0; i < r1; ++i) {
        if (i < r && j < r && k < r) continue;
        grid.corner_samples[grid.corner_index(i, j, k)] =
            grid.corner_samples[grid.corner_index(i % r, j % r, k % r)];
      }

  double m = 0.0;
  for (double v : grid.samples) m = std::max(m, std::abs(v));
  grid.norm = m;
  return grid;
}

// Samples an arbitrary scalar field on the same grid layout (targets for
// fitting, analytic fixtures).
template <class F>
inline FieldGrid sample_grid_fn(F&& fn, int r) {
  if (r < 4) throw ValidationError("grid resolution must be >= 4");
  FieldGrid grid;
  grid.resolution = r;
  grid.samples.assign(static_cast<size_t>(r) * r * r, 0.0);
  grid.corner_samples.assign(static_cast<size_t>(r + 1) * (r + 1) * (r + 1), 0.0);
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i)
        grid.samples[grid.cell_index(i, j, k)] = fn(Vec3((i + 0.5) / r, (j + 0.5) / r, (k + 0.5) / r));
  int r1 = r + 1;
  for (int k = 0; k < r1; ++k)
    for (int j = 0; j < r1; ++j)
      for (int i = 0; i < r1; ++i)
        grid.corner_samples[grid.corner_index(i, j, k)] =
            fn(Vec3(double(i) / r, double(j) / r, double(k) / r));
  double m = 0.0;
  for (double v : grid.samples) m = std::max(m, std::abs(v));
  grid.norm = m;
  return grid;
}

struct RandomDesignSpec {
  Symmetry symmetry = Symmetry::CubicOctant;
  int n_charges_pre_expansion = 8;
  int truncation = 2;
  double weight_lo = -1.0;
  double weight_hi = 1.0;
};

inline DesignParams random_design(const RandomDesignSpec& spec, std::uint64_t seed) {
  if (spec.n_charges_pre_expansion <= 0 || spec.n_charges_pre_expansion % 2 != 0)
    throw ValidationError("pre-expansion charge count must be even and positive");
  if (spec.truncation < 0) throw ValidationError("truncation order K must be >= 0");
  Rng rng(seed);
  DesignParams p;
  p.symmetry = spec.symmetry;
  p.truncation = spec.truncation;
  int n = spec.truncation + 1;
  p.weights.assign(static_cast<size_t>(n) * n * n, 0.0);
  for (int h = 0; h < n; ++h)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        if (h == 0 && k == 0 && l == 0) continue;
        p.weight(h, k, l) = rng.uniform(spec.weight_lo, spec.weight_hi);
      }
  double hi = spec.symmetry == Symmetry::None ? 1.0 : 0.5;
  for (int i = 0; i < spec.n_charges_pre_expansion; ++i) {
    Vec3 pos(rng.uniform(0.0, hi), rng.uniform(0.0, hi), rng.uniform(0.0, hi));
    pos = fold_into_fbv(spec.symmetry, pos);
    p.charges.emplace_back(pos, i < spec.n_charges_pre_expansion / 2 ? 1 : -1);
  }
  p.validate();
  return p;
}

}  // namespace shellular
