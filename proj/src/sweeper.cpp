#include "pitlab/sweeper.hpp"

#include <string>

#include "pitlab/errors.hpp"

namespace pitlab {

LevelState LevelState::spread(const Vector& u0, int num_nodes, double dt, const Problem& problem) {
  LevelState s;
  s.u0 = u0;
  s.dt = dt;
  s.u.assign(num_nodes, u0);
  s.tau.assign(num_nodes, Vector::Zero(u0.size()));
  evaluate_rhs(s, problem);
  return s;
}

void evaluate_rhs(LevelState& state, const Problem& problem) {
  const int M = state.num_nodes();
  state.f_implicit.resize(M);
  state.f_explicit.resize(M);
  for (int m = 0; m < M; ++m) {
    problem.eval_implicit(state.u[m], state.f_implicit[m]);
    problem.eval_explicit(state.u[m], state.f_explicit[m]);
  }
}

void imex_sweep(LevelState& state, const Table& table, const Problem& problem) {
  const int M = table.num_nodes;
  const double dt = state.dt;
  const Mat<double> qi = table.q - table.qd_implicit;
  const Mat<double> qe = table.q - table.qd_explicit;

  // Contributions of the previous iterate, fixed for the whole sweep.
  std::vector<Vector> rhs(M);
  for (int m = 0; m < M; ++m) {
    rhs[m] = state.u0 + state.tau[m];
    for (int j = 0; j < M; ++j)
      rhs[m] += dt * (qi(m, j) * state.f_implicit[j] + qe(m, j) * state.f_explicit[j]);
  }

  for (int m = 0; m < M; ++m) {
    Vector r = rhs[m];
    for (int j = 0; j < m; ++j)
      r += dt * (table.qd_implicit(m, j) * state.f_implicit[j] +
                 table.qd_explicit(m, j) * state.f_explicit[j]);
    try {
      problem.implicit_solve(r, dt * table.qd_implicit(m, m), state.u[m]);
    } catch (const NumericFailure& e) {
      throw NumericFailure("sweep node " + std::to_string(m) + ": " + e.what());
    }
    problem.eval_implicit(state.u[m], state.f_implicit[m]);
    problem.eval_explicit(state.u[m], state.f_explicit[m]);
  }
}

std::vector<Vector> integrate(const LevelState& state, const Table& table) {
  const int M = table.num_nodes;
  std::vector<Vector> out(M, Vector::Zero(state.dofs()));
  for (int m = 0; m < M; ++m)
    for (int j = 0; j < M; ++j)
      out[m] += state.dt * table.q(m, j) * (state.f_implicit[j] + state.f_explicit[j]);
  return out;
}

double compute_residual(LevelState& state, const Table& table) {
  const std::vector<Vector> integral = integrate(state, table);
  double res = 0;
  for (int m = 0; m < table.num_nodes; ++m)
    res = std::max(res, (state.u0 + integral[m] + state.tau[m] - state.u[m]).lpNorm<Eigen::Infinity>());
  state.residual_norm = res;
  return res;
}

std::vector<Vector> collocation_solve_direct(const Vector& u0, const Table& table, double dt,
                                             const Problem& problem) {
  const auto a = problem.linear_operator();
  if (!a) throw InvalidArgument("collocation_solve_direct: problem is not linear");
  const Eigen::Index d = a->rows();
  const int M = table.num_nodes;
  if (d * M > 4096) throw InvalidArgument("collocation_solve_direct: system too large");

  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(d * M, d * M);
  Eigen::VectorXd rhs(d * M);
  for (int m = 0; m < M; ++m) {
    rhs.segment(m * d, d) = u0;
    for (int j = 0; j < M; ++j) system.block(m * d, j * d, d, d) -= dt * table.q(m, j) * *a;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw NumericFailure("collocation_solve_direct: singular system");
  const Eigen::VectorXd sol = lu.solve(rhs);
  std::vector<Vector> out(M);
  for (int m = 0; m < M; ++m) out[m] = sol.segment(m * d, d);
  return out;
}

}  // namespace pitlab
