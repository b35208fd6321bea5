#pragma once

#include <vector>

#include "pitlab/collocation.hpp"
#include "pitlab/problems.hpp"

namespace pitlab {

/// Node values, right-hand side evaluations and FAS correction of one step
/// on one level. All vectors share the problem's dof count.
struct LevelState {
  Vector u0;
  std::vector<Vector> u;
  std::vector<Vector> f_implicit;
  std::vector<Vector> f_explicit;
  std::vector<Vector> tau;
  double dt = 0;
  double residual_norm = 0;

  int num_nodes() const { return static_cast<int>(u.size()); }
  Eigen::Index dofs() const { return u0.size(); }

  /// Copies u0 to every node, zero tau, and evaluates the right-hand side.
  static LevelState spread(const Vector& u0, int num_nodes, double dt, const Problem& problem);

  /// Value at the right interval end (last Radau node).
  const Vector& end_value() const { return u.back(); }
};

/// Re-evaluates f_implicit / f_explicit at every node.
void evaluate_rhs(LevelState& state, const Problem& problem);

/// One IMEX SDC sweep (node-by-node, implicit diagonal solved by the problem).
void imex_sweep(LevelState& state, const Table& table, const Problem& problem);

/// Max-norm collocation residual from the cached evaluations; stores it in
/// state.residual_norm.
double compute_residual(LevelState& state, const Table& table);

/// Integral terms dt * sum_j q(m, j) (fI_j + fE_j) for every node.
std::vector<Vector> integrate(const LevelState& state, const Table& table);

/// Dense solve of (I - dt Q (x) A) u = u0 for a linear problem (test oracle).
std::vector<Vector> collocation_solve_direct(const Vector& u0, const Table& table, double dt,
                                             const Problem& problem);

}  // namespace pitlab
