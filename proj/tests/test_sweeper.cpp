#include <doctest.h>

#include <cmath>

#include "pitlab/errors.hpp"
#include "pitlab/sweeper.hpp"

using namespace pitlab;

namespace {

// Dense collocation oracle built here from Q and A alone: (I - dt Q (x) A) U = 1 (x) u0.
std::vector<Vector> dense_collocation(const Table& tab, const Eigen::MatrixXd& a, const Vector& u0, double dt) {
  const Eigen::Index d = a.rows();
  const int M = tab.num_nodes;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(d * M, d * M);
  Vector rhs(d * M);
  for (int m = 0; m < M; ++m) {
    rhs.segment(m * d, d) = u0;
    for (int j = 0; j < M; ++j) sys.block(m * d, j * d, d, d) -= dt * tab.q(m, j) * a;
  }
  const Vector x = sys.partialPivLu().solve(rhs);
  std::vector<Vector> out(M);
  for (int m = 0; m < M; ++m) out[m] = x.segment(m * d, d);
  return out;
}

double max_diff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
  return m;
}

}  // namespace

TEST_CASE("spread copies u0 and evaluates f") {
  DahlquistProblem p(-2.0, 1.0);
  const auto s = LevelState::spread(Vector::Constant(1, 3.0), 3, 0.1, p);
  CHECK(s.num_nodes() == 3);
  for (int m = 0; m < 3; ++m) {
    CHECK(s.u[m][0] == 3.0);
    CHECK(s.f_implicit[m][0] == -6.0);
    CHECK(s.f_explicit[m][0] == 3.0);
    CHECK(s.tau[m][0] == 0.0);
  }
}

TEST_CASE("collocation solution is a fixed point of the sweep") {
  DahlquistProblem p(-1.0, 0.0);
  const Table tab = make_radau_table(4);
  const Vector u0 = Vector::Constant(1, 1.0);
  auto s = LevelState::spread(u0, 4, 0.3, p);
  s.u = collocation_solve_direct(u0, tab, 0.3, p);
  evaluate_rhs(s, p);
  const auto before = s.u;
  CHECK(compute_residual(s, tab) <= 1e-14);
  imex_sweep(s, tab, p);
  CHECK(max_diff(before, s.u) <= 1e-12);
}

TEST_CASE("zero right-hand side gives u0 plus tau") {
  DahlquistProblem p(0.0, 0.0);
  const Table tab = make_radau_table(3);
  auto s = LevelState::spread(Vector::Constant(1, 2.0), 3, 0.5, p);
  s.tau = {Vector::Constant(1, 0.1), Vector::Constant(1, 0.2), Vector::Constant(1, -0.3)};
  imex_sweep(s, tab, p);
  CHECK(s.u[0][0] == doctest::Approx(2.1));
  CHECK(s.u[1][0] == doctest::Approx(2.2));
  CHECK(s.u[2][0] == doctest::Approx(1.7));
  CHECK(compute_residual(s, tab) <= 1e-15);
}

TEST_CASE("residual vanishes for a constant state without forcing") {
  DahlquistProblem p(0.0, 0.0);
  const Table tab = make_radau_table(3);
  auto s = LevelState::spread(Vector::Constant(1, 4.0), 3, 0.1, p);
  CHECK(compute_residual(s, tab) == 0.0);
  CHECK(s.residual_norm == 0.0);
}

TEST_CASE("direct solver matches the dense oracle") {
  HeatProblem p(4, 1.0);
  const Table tab = make_radau_table(3);
  Vector u0(16);
  for (int i = 0; i < 16; ++i) u0[i] = std::sin(0.7 * i);
  const auto direct = collocation_solve_direct(u0, tab, 0.01, p);
  const auto oracle = dense_collocation(tab, *p.linear_operator(), u0, 0.01);
  CHECK(max_diff(direct, oracle) <= 1e-12);

  AllenCahnProblem nonlinear(4, 1.0, 0.1);
  CHECK_THROWS_AS(collocation_solve_direct(u0, tab, 0.01, nonlinear), InvalidArgument);
}

TEST_CASE("converged sweeps reach the collocation solution with either preconditioner") {
  // split problem: stiff part implicit, mild part explicit
  DahlquistProblem p(-5.0, 0.8);
  const Vector u0 = Vector::Constant(1, 1.0);
  const double dt = 0.2;
  Table tab = make_radau_table(3);
  Eigen::MatrixXd a(1, 1);
  a << -4.2;
  const auto oracle = dense_collocation(tab, a, u0, dt);

  SUBCASE("LU implicit part") {
    auto s = LevelState::spread(u0, 3, dt, p);
    for (int k = 0; k < 60; ++k) imex_sweep(s, tab, p);
    CHECK(max_diff(s.u, oracle) <= 1e-10);
  }
  SUBCASE("implicit Euler style preconditioner") {
    // replace the LU factor by the backward-Euler spacings, keep explicit Euler
    Table be = tab;
    be.qd_implicit.setZero();
    for (int m = 0; m < 3; ++m)
      for (int j = 0; j <= m; ++j) be.qd_implicit(m, j) = tab.nodes[j] - (j ? tab.nodes[j - 1] : 0.0);
    auto s = LevelState::spread(u0, 3, dt, p);
    for (int k = 0; k < 200; ++k) imex_sweep(s, be, p);
    CHECK(max_diff(s.u, oracle) <= 1e-10);
  }
}

TEST_CASE("heat equation sweeps converge to the dense oracle") {
  HeatProblem p(8, 1.0);
  const Table tab = make_radau_table(3);
  Vector u0(64);
  for (int i = 0; i < 64; ++i) u0[i] = std::cos(0.3 * i) + 0.1 * i / 64.0;
  const double dt = 0.002;
  const auto oracle = dense_collocation(tab, *p.linear_operator(), u0, dt);
  auto s = LevelState::spread(u0, 3, dt, p);
  for (int k = 0; k < 40; ++k) imex_sweep(s, tab, p);
  CHECK(max_diff(s.u, oracle) <= 1e-10);
  CHECK(compute_residual(s, tab) <= 1e-10);
}

TEST_CASE("integrate applies dt Q to f") {
  DahlquistProblem p(1.0, 0.0);
  const Table tab = make_radau_table(2);
  auto s = LevelState::spread(Vector::Constant(1, 1.0), 2, 0.5, p);
  const auto in = integrate(s, tab);
  // f = 1 at both nodes: integral is dt * node
  CHECK(in[0][0] == doctest::Approx(0.5 / 3));
  CHECK(in[1][0] == doctest::Approx(0.5));
}

TEST_CASE("failed implicit solve names the node") {
  DahlquistProblem p(10.0, 0.0);  // 1 - dt*qd*lambda hits zero for a chosen dt
  const Table tab = make_radau_table(2);
  const double dt = 1.0 / (10.0 * tab.qd_implicit(0, 0));
  auto s = LevelState::spread(Vector::Constant(1, 1.0), 2, dt, p);
  try {
    imex_sweep(s, tab, p);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("node 0") != std::string::npos);
  }
}
