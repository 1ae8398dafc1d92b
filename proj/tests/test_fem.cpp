#include <catch2/catch_amalgamated.hpp>

#include "shellular/pipeline.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

using namespace shellular;

namespace {

double rel_diff(const Mat6& a, const Mat6& b) {
  double scale = b.cwiseAbs().maxCoeff();
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

DesignParams seeded_design(std::uint64_t seed) {
  RandomDesignSpec spec;
  spec.symmetry = Symmetry::CubicOctant;
  spec.n_charges_pre_expansion = 4;
  return random_design(spec, seed);
}

VoxelMesh random_beta_mesh(int r, std::uint64_t seed, double lo = 0.05, double hi = 1.0) {
  VoxelMesh mesh = full_solid_mesh(r);
  Rng rng(seed);
  for (auto& b : mesh.beta) b = rng.uniform(lo, hi);
  return mesh;
}

}  // namespace

TEST_CASE("element stiffness annihilates rigid modes") {
  BaseMaterial mat;
  ElementStiffness K = element_stiffness(mat, 0.25);
  double scale = K.matrix.cwiseAbs().maxCoeff();

  Eigen::Matrix<double, 24, 1> t;
  for (int n = 0; n < 8; ++n) t.segment<3>(3 * n) = Vec3(0.3, -1.2, 0.7);
  CHECK((K.matrix * t).cwiseAbs().maxCoeff() < 1e-12 * scale);

  // linearized rotation u = w x y
  Vec3 w(0.2, -0.5, 1.0);
  Eigen::Matrix<double, 24, 1> rot;
  const auto& off = hex_corner_offsets();
  for (int n = 0; n < 8; ++n) rot.segment<3>(3 * n) = w.cross(off[n].cast<double>() * 0.25);
  CHECK((K.matrix * rot).cwiseAbs().maxCoeff() < 1e-12 * scale);

  Eigen::SelfAdjointEigenSolver<Mat24> eig(K.matrix);
  int zero_modes = 0;
  for (int i = 0; i < 24; ++i)
    if (std::abs(eig.eigenvalues()[i]) < 1e-12 * scale) ++zero_modes;
  CHECK(zero_modes == 6);
  CHECK(eig.eigenvalues()[0] > -1e-12 * scale);  // positive semidefinite
  CHECK((K.matrix - K.matrix.transpose()).cwiseAbs().maxCoeff() < 1e-12 * scale);
}

TEST_CASE("element stiffness scales linearly with the edge") {
  BaseMaterial mat;
  mat.poisson = 0.25;
  Mat24 k1 = element_stiffness(mat, 1.0).matrix;
  Mat24 kh = element_stiffness(mat, 0.5).matrix;
  CHECK((kh - 0.5 * k1).cwiseAbs().maxCoeff() < 1e-12 * k1.cwiseAbs().maxCoeff());
}

TEST_CASE("element stiffness is the Hessian of the quadrature energy") {
  BaseMaterial mat;
  mat.poisson = 0.3;
  double edge = 0.5;
  ElementStiffness K = element_stiffness(mat, edge);
  Rng rng(4);
  Eigen::Matrix<double, 24, 1> u;
  for (int i = 0; i < 24; ++i) u(i) = rng.uniform(-1.0, 1.0);
  double e_quad = oracle::element_energy_quadrature(mat, edge, u);
  double e_mat = 0.5 * u.dot(K.matrix * u);
  CHECK(e_quad == Catch::Approx(e_mat).epsilon(1e-10));

  // a few finite-difference Hessian entries against the quadrature energy
  double h = 1.0;
  for (auto [i, j] : {std::pair{0, 0}, {5, 7}, {13, 2}, {23, 23}}) {
    Eigen::Matrix<double, 24, 1> ei = Eigen::Matrix<double, 24, 1>::Zero();
    Eigen::Matrix<double, 24, 1> ej = Eigen::Matrix<double, 24, 1>::Zero();
    ei(i) = h;
    ej(j) = h;
    double kij = (oracle::element_energy_quadrature(mat, edge, ei + ej) -
                  oracle::element_energy_quadrature(mat, edge, ei) -
                  oracle::element_energy_quadrature(mat, edge, ej)) /
                 (h * h);
    CHECK(kij == Catch::Approx(K.matrix(i, j)).margin(1e-10));
  }
}

TEST_CASE("material validation") {
  BaseMaterial bad;
  bad.poisson = 0.5;
  CHECK_THROWS_AS(element_stiffness(bad, 1.0), ValidationError);
  bad.poisson = 0.3;
  bad.youngs = -1.0;
  CHECK_THROWS_AS(element_stiffness(bad, 1.0), ValidationError);
}

TEST_CASE("full solid mesh has the expected master dof count") {
  int r = 4;
  VoxelMesh mesh = full_solid_mesh(r);
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 1.0 / r);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  // r^3 distinct lattice nodes on the torus, minus the prescribed corner
  CHECK(sys.n_master_dofs == 3 * (r * r * r - 1));
}

TEST_CASE("zero strain gives the zero solution") {
  VoxelMesh mesh = full_solid_mesh(4);
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 0.25);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  // rhs is linear in the test strain, so the zero-strain system is Au = 0
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(sys.A);
  Eigen::VectorXd u = solver.solve(Eigen::VectorXd::Zero(sys.n_master_dofs));
  CHECK(u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduced matrix is symmetric positive definite") {
  VoxelMesh mesh = random_beta_mesh(4, 99);
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 0.25);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  Eigen::MatrixXd A = Eigen::MatrixXd(sys.A);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * A.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  CHECK(eig.eigenvalues()(0) > 0.0);
}

TEST_CASE("solid cube under unit strain deforms affinely") {
  int r = 4;
  VoxelMesh mesh = full_solid_mesh(r);
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 1.0 / r);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  auto u = solve_test_strains(sys);
  const auto& strains = unit_test_strains();
  for (int s = 0; s < 6; ++s)
    for (size_t n = 0; n < mesh.num_nodes(); ++n) {
      Vec3 y = mesh.node_coords[n].cast<double>() / double(r);
      Vec3 expect = strains[s] * y;
      CHECK((u[s].segment<3>(3 * n) - expect).norm() < 1e-10);
    }
}

TEST_CASE("periodic jump conditions hold for every pair and strain") {
  FieldGrid grid = sample_grid(seeded_design(3), 8);
  VoxelMesh mesh = build_reduced_mesh(grid, ShellParams{});
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 1.0 / 8);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  auto u = solve_test_strains(sys);
  const auto& strains = unit_test_strains();
  for (int gi = 0; gi < static_cast<int>(mesh.periodic_groups.size()); ++gi) {
    const auto& g = mesh.periodic_groups[gi];
    if (gi == mesh.corner_group) continue;
    for (const auto& [node, delta] : g.slaves)
      for (int s = 0; s < 6; ++s) {
        Vec3 jump = u[s].segment<3>(3 * node) - u[s].segment<3>(3 * g.master);
        Vec3 expect = strains[s] * delta.cast<double>();
        CHECK((jump - expect).norm() < 1e-10);
      }
  }
}

TEST_CASE("master-slave solve matches the dense KKT oracle") {
  int r = 4;
  BaseMaterial mat;
  ElementStiffness K0 = element_stiffness(mat, 1.0 / r);
  int fixture = 0;
  for (auto mesh : {full_solid_mesh(r), random_beta_mesh(r, 7), random_beta_mesh(r, 1, 0.001, 1.0)}) {
    INFO("fixture " << fixture++);
    PeriodicSystem sys = build_periodic_system(mesh, K0);
    auto u = solve_test_strains(sys);
    const auto& strains = unit_test_strains();
    for (int s = 0; s < 6; ++s) {
      Eigen::VectorXd u_dense = oracle::dense_kkt_solve(mesh, K0, strains[s]);
      double scale = std::max(u_dense.cwiseAbs().maxCoeff(), 1e-12);
      CHECK((u[s] - u_dense).cwiseAbs().maxCoeff() <= 1e-8 * scale);
    }
  }
}

TEST_CASE("full solid homogenization reproduces the base isotropic tensor") {
  int r = 4;
  BaseMaterial mat;
  VoxelMesh mesh = full_solid_mesh(r);
  ElementStiffness K0 = element_stiffness(mat, 1.0 / r);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  ElasticTensor C = effective_tensor(mesh, K0, solve_test_strains(sys));
  ElasticTensor iso = ElasticTensor::isotropic(mat);
  CHECK(rel_diff(C.c, iso.c) < 1e-6);
  CHECK(iso.c(0, 0) == Catch::Approx(1.34615384615).epsilon(1e-9));
  CHECK(iso.c(0, 1) == Catch::Approx(0.57692307692).epsilon(1e-9));
  CHECK(iso.c(3, 3) == Catch::Approx(0.38461538461).epsilon(1e-9));
}

TEST_CASE("layered beta profile matches the exact laminate constants") {
  int r = 8;
  BaseMaterial mat;
  std::vector<double> layer_scale = {1.0, 0.4, 1e-3, 0.02, 1.0, 0.7, 1e-3, 0.15};
  VoxelMesh mesh = full_solid_mesh(r);
  for (size_t e = 0; e < mesh.num_elements(); ++e) {
    int k = static_cast<int>(VoxelMesh::element_coords(mesh.elements[e], r)[2]);
    mesh.beta[e] = layer_scale[k];
  }
  ElementStiffness K0 = element_stiffness(mat, 1.0 / r);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  ElasticTensor C = effective_tensor(mesh, K0, solve_test_strains(sys, 1e-12));
  oracle::LaminateConstants lam = oracle::laminate_constants(layer_scale, mat.lambda(), mat.mu());
  CHECK(C.c(0, 0) == Catch::Approx(lam.C11).epsilon(1e-8));
  CHECK(C.c(1, 1) == Catch::Approx(lam.C11).epsilon(1e-8));
  CHECK(C.c(0, 1) == Catch::Approx(lam.C12).epsilon(1e-8));
  CHECK(C.c(0, 2) == Catch::Approx(lam.C13).epsilon(1e-8));
  CHECK(C.c(2, 2) == Catch::Approx(lam.C33).epsilon(1e-8));
  CHECK(C.c(3, 3) == Catch::Approx(lam.C44).epsilon(1e-8));  // yz shear
  CHECK(C.c(4, 4) == Catch::Approx(lam.C44).epsilon(1e-8));  // xz shear
  CHECK(C.c(5, 5) == Catch::Approx(lam.C66).epsilon(1e-8));  // xy shear
}

TEST_CASE("grid solver agrees with the master-slave direct solve") {
  int r = 8;
  BaseMaterial mat;
  VoxelMesh mesh = random_beta_mesh(r, 31, 0.05, 1.0);
  ElementStiffness K0 = element_stiffness(mat, 1.0 / r);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  ElasticTensor direct = effective_tensor(mesh, K0, solve_test_strains(sys));

  std::vector<double> beta(mesh.beta.begin(), mesh.beta.end());
  GridSolver grid(std::move(beta), r, K0);
  ElasticTensor cg = grid.solve(1e-11).tensor;
  CHECK(rel_diff(cg.c, direct.c) < 1e-8);
}

TEST_CASE("gauge choice does not change the tensor") {
  FieldGrid grid = sample_grid(seeded_design(12), 8);
  VoxelMesh mesh = build_reduced_mesh(grid, ShellParams{});
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 1.0 / 8);
  Mat6 ref;
  for (int gauge : {0, 3, 7}) {
    PeriodicSystem sys = build_periodic_system(mesh, K0, gauge);
    ElasticTensor C = effective_tensor(mesh, K0, solve_test_strains(sys));
    if (gauge == 0)
      ref = C.c;
    else
      CHECK(rel_diff(C.c, ref) < 1e-10);
  }
}

TEST_CASE("tensor scales exactly with the base modulus") {
  FieldGrid grid = sample_grid(seeded_design(21), 8);
  VoxelMesh mesh = build_reduced_mesh(grid, ShellParams{});
  BaseMaterial m1, m3;
  m3.youngs = 3.0;
  ElementStiffness k1 = element_stiffness(m1, 1.0 / 8);
  ElementStiffness k3 = element_stiffness(m3, 1.0 / 8);
  ElasticTensor c1 = effective_tensor(mesh, k1, solve_test_strains(build_periodic_system(mesh, k1)));
  ElasticTensor c3 = effective_tensor(mesh, k3, solve_test_strains(build_periodic_system(mesh, k3)));
  CHECK(rel_diff(c3.c, 3.0 * c1.c) < 1e-12);
}

TEST_CASE("homogenize composes the stages and reports timings") {
  HomogenizationResult res = homogenize(seeded_design(5), ShellParams{}, BaseMaterial{}, 8);
  CHECK(res.tensor.c.cwiseAbs().maxCoeff() > 0.0);
  CHECK(res.volume_ratio > 0.0);
  CHECK(res.timings.t_fwd > 0.0);
  // at r=8 the one-layer dilation already covers the cell, so the pipeline
  // falls back to the full grid and its CG solver
  CHECK(res.mesh.full_fallback);
  CHECK(res.solver_used == "grid_cg");
  HomogenizationResult res16 = homogenize(seeded_design(5), ShellParams{}, BaseMaterial{}, 16);
  CHECK_FALSE(res16.mesh.full_fallback);
  CHECK(res16.solver_used == "direct_ldlt");
  json j = res.to_json();
  for (const char* key : {"t_field", "t_mesh", "t_PBC", "t_AS", "t_RHS", "t_solve", "t_C", "t_fwd"})
    CHECK(j["timings_ms"].contains(key));

  DesignParams degenerate = seeded_design(5);
  std::fill(degenerate.weights.begin(), degenerate.weights.end(), 0.0);
  CHECK_THROWS_AS(homogenize(degenerate, ShellParams{}, BaseMaterial{}, 8), DegenerateDesignError);
}

TEST_CASE("plane design homogenizes to an orthotropic tensor") {
  DesignParams p;
  p.symmetry = Symmetry::None;
  p.truncation = 2;
  p.weights.assign(27, 0.0);
  p.weight(0, 0, 1) = 1.0;
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.25), 1);
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.75), -1);
  ShellParams sp;
  sp.sharpness = 100.0;
  HomogenizationResult res = homogenize(p, sp, BaseMaterial{}, 16);
  double c11 = res.tensor.c(0, 0);
  for (int i = 0; i < 3; ++i)
    for (int j = 3; j < 6; ++j) CHECK(std::abs(res.tensor.c(i, j)) < 1e-6 * c11);
}

TEST_CASE("void-dominant design stays under the floor bound") {
  DesignParams p;
  p.symmetry = Symmetry::None;
  p.truncation = 2;
  p.weights.assign(27, 0.0);
  p.weight(0, 0, 1) = 1.0;
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.25), 1);
  p.charges.emplace_back(Vec3(0.5, 0.5, 0.75), -1);
  ShellParams sp;
  sp.sharpness = 120.0;
  sp.floor_ratio = 1e-3;
  FieldGrid grid = sample_grid(p, 16);
  VoxelMesh mesh = full_field_mesh(grid, sp);
  ElementStiffness K0 = element_stiffness(BaseMaterial{}, 1.0 / 16);
  PeriodicSystem sys = build_periodic_system(mesh, K0);
  ElasticTensor C = effective_tensor(mesh, K0, solve_test_strains(sys));
  double c11_base = ElasticTensor::isotropic(BaseMaterial{}).c(0, 0);
  CHECK(C.c.cwiseAbs().maxCoeff() <= 1e-2 * c11_base);
}

TEST_CASE("self convergence between r=8 and r=16") {
  DesignParams p = seeded_design(77);
  HomogenizationResult a = homogenize(p, ShellParams{}, BaseMaterial{}, 8);
  HomogenizationResult b = homogenize(p, ShellParams{}, BaseMaterial{}, 16);
  // coarse sanity band; the acceptance suite checks r=16 vs r=32
  CHECK(rel_diff(a.tensor.c, b.tensor.c) < 0.6);
}
