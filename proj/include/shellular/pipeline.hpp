#pragma once

#include "shellular/common.hpp"
#include "shellular/fem.hpp"
#include "shellular/field.hpp"
#include "shellular/grid_solver.hpp"
#include "shellular/voxel.hpp"

#include <string>

namespace shellular {

enum class SolverKind { Auto, Direct, GridCG };

struct HomogenizeOptions {
  int threads = 1;
  SolverKind solver = SolverKind::Auto;
  double residual_tol = 1e-9;
  int corner_gauge = 0;
};

struct HomogenizationResult {
  ElasticTensor tensor;
  FieldGrid grid;
  VoxelMesh mesh;
  StageTimings timings;
  double volume_ratio = 0.0;
  std::string solver_used;

  json to_json() const {
    return json{{"C", tensor.to_json()},
                {"resolution", grid.resolution},
                {"volume_ratio", volume_ratio},
                {"element_fraction", mesh.element_fraction()},
                {"solver", solver_used},
                {"timings_ms", timings.to_json()}};
  }
};

namespace detail {

template <class Fn>
auto tagged_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(stage) + ": " + e.what());
  } catch (const DegenerateDesignError& e) {
    throw DegenerateDesignError(std::string(stage) + ": " + e.what());
  } catch (const SolverError& e) {
    throw SolverError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace detail

// End-to-end homogenization: field sampling, reduced meshing, periodic
// system assembly, six test-strain solves, tensor reduction. Reduced meshes
// go through the sparse direct solver; a full-grid fallback switches to the
// matrix-free CG homogenizer (equivalence covered by tests).
inline HomogenizationResult homogenize(const DesignParams& params, const ShellParams& sp,
                                       const BaseMaterial& mat, int r,
                                       const HomogenizeOptions& opt = {}) {
  mat.validate();
  sp.validate();
  Timer total;
  HomogenizationResult res;

  Timer stage;
  res.grid = detail::tagged_stage("field", [&] { return sample_grid(params, r, opt.threads); });
  res.timings.t_field = stage.elapsed_ms();
  if (res.grid.degenerate()) throw DegenerateDesignError("field: design is degenerate (norm = 0)");

  res.mesh = detail::tagged_stage("mesh", [&] { return build_reduced_mesh(res.grid, sp); });
  res.timings.t_mesh = res.mesh.t_select_ms;
  res.timings.t_PBC = res.mesh.t_topology_ms;
  res.volume_ratio = res.mesh.volume_ratio();

  ElementStiffness K0 = element_stiffness(mat, 1.0 / r);

  bool use_grid = opt.solver == SolverKind::GridCG ||
                  (opt.solver == SolverKind::Auto && res.mesh.full_fallback);
  if (use_grid) {
    std::vector<double> beta(static_cast<size_t>(r) * r * r, 0.0);
    for (size_t e = 0; e < res.mesh.num_elements(); ++e) beta[res.mesh.elements[e]] = res.mesh.beta[e];
    if (!res.mesh.full_fallback)
      throw SolverError("solve: grid solver requires the full-grid fallback mesh");
    stage.reset();
    GridSolver solver(std::move(beta), r, K0, opt.threads);
    res.timings.t_AS = stage.elapsed_ms();
    auto out = detail::tagged_stage("solve", [&] { return solver.solve(opt.residual_tol); });
    res.timings.t_RHS = out.t_rhs_ms;
    res.timings.t_solve = out.t_solve_ms;
    res.timings.t_C = out.t_reduce_ms;
    res.tensor = out.tensor;
    res.solver_used = "grid_cg";
  } else {
    PeriodicSystem sys = detail::tagged_stage(
        "assembly", [&] { return build_periodic_system(res.mesh, K0, opt.corner_gauge); });
    res.timings.t_AS = sys.t_assembly_ms;
    res.timings.t_RHS = sys.t_rhs_ms;
    stage.reset();
    auto u = detail::tagged_stage("solve", [&] { return solve_test_strains(sys, opt.residual_tol); });
    res.timings.t_solve = stage.elapsed_ms();
    stage.reset();
    res.tensor = detail::tagged_stage("tensor", [&] { return effective_tensor(res.mesh, K0, u); });
    res.timings.t_C = stage.elapsed_ms();
    res.solver_used = "direct_ldlt";
  }

  res.timings.t_fwd = total.elapsed_ms();
  return res;
}

}  // namespace shellular
