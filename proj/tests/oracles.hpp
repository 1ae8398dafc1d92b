#pragma once

// Test-only reference implementations. Everything here is written as a
// direct transcription of the defining formulas, independent of the library
// code paths it checks, and deliberately unoptimized.

#include "shellular/common.hpp"
#include "shellular/fem.hpp"
#include "shellular/field.hpp"
#include "shellular/voxel.hpp"

#include <cmath>
#include <vector>

namespace oracle {

using shellular::DesignParams;
using shellular::Vec3;

// Plain triple-loop summation of the truncated charge-potential series over
// the fully expanded charge list.
inline double direct_field_sum(const DesignParams& expanded, const Vec3& p) {
  double total = 0.0;
  int K = expanded.truncation;
  for (const auto& c : expanded.charges) {
    double dx = p[0] - c.position[0];
    double dy = p[1] - c.position[1];
    double dz = p[2] - c.position[2];
    for (int h = 0; h <= K; ++h)
      for (int k = 0; k <= K; ++k)
        for (int l = 0; l <= K; ++l) {
          if (h == 0 && k == 0 && l == 0) continue;
          int zeros = (h == 0) + (k == 0) + (l == 0);
          double w = zeros == 1 ? 0.5 : (zeros == 2 ? 0.25 : 1.0);
          double b = std::cos(2.0 * M_PI * h * dx) * std::cos(2.0 * M_PI * k * dy) *
                     std::cos(2.0 * M_PI * l * dz) / double(h * h + k * k + l * l);
          total += c.sign * expanded.weight(h, k, l) * w * b;
        }
  }
  return total;
}

// Central finite differences of F with respect to every design parameter.
struct FdGradient {
  std::vector<Vec3> d_position;
  std::vector<double> d_weight;
};

inline FdGradient finite_difference_gradient(const DesignParams& params, const Vec3& p,
                                             double step = 1e-5) {
  FdGradient g;
  g.d_position.assign(params.charges.size(), Vec3::Zero());
  g.d_weight.assign(params.weights.size(), 0.0);
  for (size_t j = 0; j < params.charges.size(); ++j)
    for (int a = 0; a < 3; ++a) {
      DesignParams hi = params, lo = params;
      hi.charges[j].position[a] += step;
      lo.charges[j].position[a] -= step;
      double fp = direct_field_sum(shellular::expand_symmetry(hi), p);
      double fm = direct_field_sum(shellular::expand_symmetry(lo), p);
      g.d_position[j][a] = (fp - fm) / (2.0 * step);
    }
  for (size_t w = 1; w < params.weights.size(); ++w) {
    DesignParams hi = params, lo = params;
    hi.weights[w] += step;
    lo.weights[w] -= step;
    double fp = direct_field_sum(shellular::expand_symmetry(hi), p);
    double fm = direct_field_sum(shellular::expand_symmetry(lo), p);
    g.d_weight[w] = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Dense Lagrange-multiplier solve of the periodic cell problem: full
// stiffness over all nodes, explicit constraint rows for every periodic
// pair and the prescribed corner group. Feasible only at tiny resolutions.
inline Eigen::VectorXd dense_kkt_solve(const shellular::VoxelMesh& mesh,
                                       const shellular::ElementStiffness& K0,
                                       const shellular::Mat3& strain) {
  using namespace shellular;
  const size_t nn = mesh.num_nodes();
  const size_t N = 3 * nn;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
  for (size_t e = 0; e < mesh.num_elements(); ++e) {
    const std::uint32_t* nodes = &mesh.element_nodes[e * 8];
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            K(3 * nodes[a] + i, 3 * nodes[b] + j) +=
                mesh.beta[e] * K0.matrix(3 * a + i, 3 * b + j);
  }

  std::vector<Eigen::Triplet<double>> grows;
  std::vector<double> gvals;
  int row = 0;
  auto add_row = [&](std::uint32_t node, int comp, double coeff) {
    grows.emplace_back(row, 3 * node + comp, coeff);
  };
  for (int gi = 0; gi < static_cast<int>(mesh.periodic_groups.size()); ++gi) {
    const auto& g = mesh.periodic_groups[gi];
    if (gi == mesh.corner_group) {
      // u = eps * dy at every corner member, master pinned at zero
      add_row(g.master, 0, 1.0), gvals.push_back(0.0), ++row;
      add_row(g.master, 1, 1.0), gvals.push_back(0.0), ++row;
      add_row(g.master, 2, 1.0), gvals.push_back(0.0), ++row;
      for (const auto& [node, delta] : g.slaves) {
        Eigen::Vector3d t = strain * delta.cast<double>();
        for (int c = 0; c < 3; ++c) add_row(node, c, 1.0), gvals.push_back(t[c]), ++row;
      }
    } else {
      for (const auto& [node, delta] : g.slaves) {
        Eigen::Vector3d t = strain * delta.cast<double>();
        for (int c = 0; c < 3; ++c) {
          add_row(node, c, 1.0);
          grows.emplace_back(row, 3 * g.master + c, -1.0);
          gvals.push_back(t[c]);
          ++row;
        }
      }
    }
  }
  const int M = row;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, N);
  for (const auto& t : grows) G(t.row(), t.col()) = t.value();
  Eigen::MatrixXd KKT = Eigen::MatrixXd::Zero(N + M, N + M);
  KKT.topLeftCorner(N, N) = K;
  KKT.topRightCorner(N, M) = G.transpose();
  KKT.bottomLeftCorner(M, N) = G;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N + M);
  for (int i = 0; i < M; ++i) rhs(N + i) = gvals[i];
  Eigen::VectorXd sol = KKT.fullPivLu().solve(rhs);
  return sol.head(N);
}

// Effective stiffness constants of a periodic stack of isotropic layers
// normal to z (exact layered-medium closed form). Layer m has Lame
// parameters scale[m] * (lambda, mu) and thickness 1/n.
struct LaminateConstants {
  double C11, C12, C13, C33, C44, C66;
};

inline LaminateConstants laminate_constants(const std::vector<double>& scale, double lambda,
                                            double mu) {
  auto mean = [&](auto f) {
    double s = 0.0;
    for (double b : scale) s += f(b * lambda, b * mu);
    return s / double(scale.size());
  };
  double inv_a = mean([](double la, double m) { return 1.0 / (la + 2 * m); });
  double la_over_a = mean([](double la, double m) { return la / (la + 2 * m); });
  double C33 = 1.0 / inv_a;
  double C13 = la_over_a * C33;
  double C11 = mean([](double la, double m) { return 4 * m * (la + m) / (la + 2 * m); }) +
               la_over_a * la_over_a * C33;
  double C12 = mean([](double la, double m) { return 2 * m * la / (la + 2 * m); }) +
               la_over_a * la_over_a * C33;
  double C44 = 1.0 / mean([](double, double m) { return 1.0 / m; });
  double C66 = mean([](double, double m) { return m; });
  return {C11, C12, C13, C33, C44, C66};
}

// Discrete elastic energy of one trilinear voxel element by direct
// quadrature of (1/2) strain : D : strain, written without reference to the
// element stiffness assembly.
inline double element_energy_quadrature(const shellular::BaseMaterial& mat, double edge,
                                        const Eigen::Matrix<double, 24, 1>& u) {
  static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  // 3-point Gauss-Legendre on [0,1]
  const double gx[3] = {0.5 * (1 - std::sqrt(3.0 / 5.0)), 0.5, 0.5 * (1 + std::sqrt(3.0 / 5.0))};
  const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  double la = mat.lambda(), mu = mat.mu();
  double energy = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        double x = gx[a], y = gx[b], z = gx[c];
        Eigen::Matrix3d grad = Eigen::Matrix3d::Zero();  // du_i/dx_j
        for (int n = 0; n < 8; ++n) {
          double fx = corner[n][0] ? x : 1 - x;
          double fy = corner[n][1] ? y : 1 - y;
          double fz = corner[n][2] ? z : 1 - z;
          double sx = corner[n][0] ? 1.0 : -1.0;
          double sy = corner[n][1] ? 1.0 : -1.0;
          double sz = corner[n][2] ? 1.0 : -1.0;
          Eigen::Vector3d dN(sx * fy * fz / edge, fx * sy * fz / edge, fx * fy * sz / edge);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) grad(i, j) += u(3 * n + i) * dN(j);
        }
        Eigen::Matrix3d eps = 0.5 * (grad + grad.transpose());
        double tr = eps.trace();
        double density = 0.5 * la * tr * tr + mu * eps.squaredNorm();
        energy += gw[a] * gw[b] * gw[c] * density * edge * edge * edge;
      }
  return energy;
}

}  // namespace oracle
