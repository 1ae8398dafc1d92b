#pragma once

#include "shellular/common.hpp"
#include "shellular/fem.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace shellular {

// Matrix-free periodic homogenizer on the full r^3 voxel grid. Degrees of
// freedom are the fluctuation displacements on the r^3 lattice with wrapped
// connectivity, the affine part enters through element-local constant-strain
// loads, and the six test-strain systems run as lockstep Jacobi-PCG sharing
// one fused operator application. Used when the reduced mesh degenerates to
// the full grid, where a direct factorization would not fit in memory.
class GridSolver {
 public:
  GridSolver(std::vector<double> beta, int r, const ElementStiffness& K0, int threads = 1)
      : beta_(std::move(beta)), r_(r), K0_(K0.matrix), threads_(threads) {
    if (static_cast<size_t>(r_) * r_ * r_ != beta_.size())
      throw ValidationError("beta array does not match resolution");
    n_nodes_ = static_cast<size_t>(r_) * r_ * r_;
    build_node_tables();
    build_preconditioner();
  }

  struct Result {
    ElasticTensor tensor;
    std::array<int, 6> iterations{};
    double t_rhs_ms = 0.0;
    double t_solve_ms = 0.0;
    double t_reduce_ms = 0.0;
  };

  Result solve(double tol = 1e-9, int max_iter = 0) {
    if (max_iter <= 0) max_iter = 20 * r_ + 2000;
    const size_t N = 3 * n_nodes_;
    using Block = Eigen::Matrix<double, Eigen::Dynamic, 6>;
    Block X = Block::Zero(N, 6), R(N, 6), P(N, 6), AP(N, 6), Z(N, 6);
    Timer timer;
    R = rhs();
    double t_rhs = timer.elapsed_ms();
    timer.reset();
    Eigen::Matrix<double, 1, 6> bnorm = R.colwise().norm();
    apply_precond(R, Z);
    P = Z;
    Eigen::Matrix<double, 1, 6> rz = (R.array() * Z.array()).colwise().sum();
    std::array<bool, 6> done{};
    std::array<int, 6> iters{};
    for (int s = 0; s < 6; ++s)
      if (bnorm(s) == 0.0) done[s] = true;
    int it = 0;
    while (it < max_iter) {
      bool all = true;
      for (int s = 0; s < 6; ++s) all = all && done[s];
      if (all) break;
      apply(P, AP);
      for (int s = 0; s < 6; ++s) {
        if (done[s]) continue;
        double pap = P.col(s).dot(AP.col(s));
        if (pap <= 0.0) throw SolverError("grid CG: operator lost positive definiteness");
        double alpha = rz(s) / pap;
        X.col(s) += alpha * P.col(s);
        R.col(s) -= alpha * AP.col(s);
        iters[s] = it + 1;
        if (R.col(s).norm() <= tol * bnorm(s)) {
          done[s] = true;
          P.col(s).setZero();
          continue;
        }
      }
      apply_precond(R, Z);
      for (int s = 0; s < 6; ++s) {
        if (done[s]) continue;
        double rz_new = R.col(s).dot(Z.col(s));
        P.col(s) = Z.col(s) + (rz_new / rz(s)) * P.col(s);
        rz(s) = rz_new;
      }
      ++it;
    }
    for (int s = 0; s < 6; ++s)
      if (!done[s])
        throw SolverError("grid CG did not reach tolerance " + std::to_string(tol) + " in " +
                          std::to_string(max_iter) + " iterations (strain " + std::to_string(s) +
                          ")");
    Result res;
    res.iterations = iters;
    res.t_rhs_ms = t_rhs;
    res.t_solve_ms = timer.elapsed_ms();
    timer.reset();
    res.tensor = reduce_tensor(X);
    res.t_reduce_ms = timer.elapsed_ms();
    return res;
  }

 private:
  using Block = Eigen::Matrix<double, Eigen::Dynamic, 6>;

  size_t node_id(int i, int j, int k) const {
    return (static_cast<size_t>(k) * r_ + j) * r_ + i;
  }

  void build_node_tables() {
    // Wrapped node ids per element, plus the element-local affine
    // displacements for the six strains (built from unwrapped corner
    // positions; the element-constant part lies in the stiffness null space).
    const auto& off = hex_corner_offsets();
    elem_nodes_.resize(beta_.size() * 8);
    for (int k = 0; k < r_; ++k)
      for (int j = 0; j < r_; ++j)
        for (int i = 0; i < r_; ++i) {
          size_t e = node_id(i, j, k);
          for (int n = 0; n < 8; ++n)
            elem_nodes_[e * 8 + n] = node_id((i + off[n][0]) % r_, (j + off[n][1]) % r_,
                                             (k + off[n][2]) % r_);
        }
    const auto& strains = unit_test_strains();
    for (int s = 0; s < 6; ++s) {
      t_local_[s].setZero();
      for (int n = 0; n < 8; ++n) {
        Vec3 y = off[n].cast<double>() / double(r_);
        t_local_[s].segment<3>(3 * n) = strains[s] * y;
      }
    }
  }

  void build_preconditioner() {
    diag_inv_.assign(n_nodes_, Mat3::Zero());
    std::vector<Mat3> diag(n_nodes_, Mat3::Zero());
    for (size_t e = 0; e < beta_.size(); ++e) {
      double be = beta_[e];
      for (int n = 0; n < 8; ++n)
        diag[elem_nodes_[e * 8 + n]] += be * K0_.block<3, 3>(3 * n, 3 * n);
    }
    for (size_t n = 0; n < n_nodes_; ++n) diag_inv_[n] = diag[n].inverse();
    diag_inv_[0].setZero();  // pinned node
  }

  Block rhs() const {
    Block F = Block::Zero(3 * n_nodes_, 6);
    Eigen::Matrix<double, 24, 6> T;
    for (int s = 0; s < 6; ++s) T.col(s) = t_local_[s];
    for (size_t e = 0; e < beta_.size(); ++e) {
      Eigen::Matrix<double, 24, 6> local = (-beta_[e]) * (K0_ * T);
      for (int n = 0; n < 8; ++n)
        F.middleRows<3>(3 * elem_nodes_[e * 8 + n]) += local.middleRows<3>(3 * n);
    }
    F.middleRows<3>(0).setZero();  // pin node (0,0,0)
    return F;
  }

  void apply(const Block& x, Block& y) const {
    y.setZero();
    // Two-phase z-layer coloring: elements in layer k write node layers k and
    // (k+1) mod r, so same-parity layers never collide (r is even).
    for (int parity = 0; parity < 2; ++parity) {
      auto work = [&](std::int64_t lo, std::int64_t hi) {
        Eigen::Matrix<double, 24, 6> u, f;
        for (std::int64_t idx = lo; idx < hi; ++idx) {
          int k = static_cast<int>(2 * idx + parity);
          if (k >= r_) continue;
          size_t base = static_cast<size_t>(k) * r_ * r_;
          for (size_t e = base; e < base + static_cast<size_t>(r_) * r_; ++e) {
            const std::uint32_t* nodes = &elem_nodes_[e * 8];
            for (int n = 0; n < 8; ++n) u.middleRows<3>(3 * n) = x.middleRows<3>(3 * nodes[n]);
            f.noalias() = beta_[e] * (K0_ * u);
            for (int n = 0; n < 8; ++n) y.middleRows<3>(3 * nodes[n]) += f.middleRows<3>(3 * n);
          }
        }
      };
      parallel_for((r_ + 1) / 2, threads_, work);
    }
    y.middleRows<3>(0).setZero();  // pinned node: keep x fixed at zero
  }

  void apply_precond(const Block& r, Block& z) const {
    for (size_t n = 0; n < n_nodes_; ++n)
      z.middleRows<3>(3 * n) = diag_inv_[n] * r.middleRows<3>(3 * n);
  }

  ElasticTensor reduce_tensor(const Block& X) const {
    Mat6 C = Mat6::Zero();
    Eigen::Matrix<double, 24, 6> U;
    Eigen::Matrix<double, 24, 6> T;
    for (int s = 0; s < 6; ++s) T.col(s) = t_local_[s];
    for (size_t e = 0; e < beta_.size(); ++e) {
      const std::uint32_t* nodes = &elem_nodes_[e * 8];
      for (int n = 0; n < 8; ++n) U.middleRows<3>(3 * n) = X.middleRows<3>(3 * nodes[n]);
      U += T;
      C += beta_[e] * (U.transpose() * (K0_ * U));
    }
    ElasticTensor out;
    out.c = 0.5 * (C + C.transpose());
    return out;
  }

  std::vector<double> beta_;
  int r_;
  Mat24 K0_;
  int threads_;
  size_t n_nodes_ = 0;
  std::vector<std::uint32_t> elem_nodes_;
  std::array<Eigen::Matrix<double, 24, 1>, 6> t_local_;
  std::vector<Mat3> diag_inv_;
};

}  // namespace shellular
