#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pitlab/errors.hpp"
#include "pitlab/problems.hpp"
#include "support.hpp"

using namespace pitlab;

namespace {

Vector random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  Vector v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

const double pi = std::acos(-1.0);

}  // namespace

TEST_CASE("dahlquist evaluations and solve") {
  DahlquistProblem p(-2.0, 0.5);
  Vector u = Vector::Constant(1, 3.0), out;
  p.eval_implicit(u, out);
  CHECK(out[0] == -6.0);
  p.eval_explicit(u, out);
  CHECK(out[0] == 1.5);
  p.implicit_solve(Vector::Constant(1, 1.0), 0.25, out);
  CHECK(out[0] == doctest::Approx(1.0 / 1.5));
  CHECK((*p.linear_operator())(0, 0) == -1.5);

  DahlquistProblem singular(1.0, 0.0);
  CHECK_THROWS_AS(singular.implicit_solve(Vector::Constant(1, 1.0), 1.0, out), NumericFailure);
}

TEST_CASE("laplacian of a Fourier mode") {
  const long n = 32;
  const double L = 2.0;
  Field2D f(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      f(i, j) = std::sin(2 * pi * 2 * grid_coordinate(i, n, L) / L) * std::cos(2 * pi * 3 * grid_coordinate(j, n, L) / L);
  const double k2 = std::pow(2 * pi / L, 2) * (4 + 9);
  CHECK((laplacian(f, L) + k2 * f).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("allen-cahn reaction term is pointwise") {
  const long n = 8;
  Field2D f(n, n);
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> d(-0.5, 1.5);
  for (long i = 0; i < f.size(); ++i) f.data()[i] = d(gen);
  const double eps = 0.1;
  const Field2D r = ac_eval(f, 1.0, eps, AcPart::Explicit);
  for (long i = 0; i < f.size(); ++i) {
    const double u = f.data()[i];
    CHECK(r.data()[i] == doctest::Approx(-2.0 / (eps * eps) * u * (1 - u) * (1 - 2 * u)));
  }
  // stable states and the unstable midpoint are zeros of the reaction
  for (double u : {0.0, 0.5, 1.0}) {
    const Field2D c = Field2D::Constant(n, n, u);
    CHECK(ac_eval(c, 1.0, eps, AcPart::Explicit).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(ac_eval(c, 1.0, eps, AcPart::Implicit).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("implicit solve inverts I - factor * lap") {
  AllenCahnProblem p(16, 1.0, 0.04);
  const Vector rhs = random_vector(p.dofs(), 5);
  Vector u, lap;
  p.implicit_solve(rhs, 0.01, u);
  p.eval_implicit(u, lap);
  CHECK((u - 0.01 * lap - rhs).lpNorm<Eigen::Infinity>() <= 1e-11);
  CHECK_THROWS_AS(ac_implicit_solve(Field2D::Zero(4, 4), 1.0, -1.0), InvalidArgument);
}

TEST_CASE("heat operator matrix agrees with evaluation") {
  HeatProblem p(4, 1.0);
  const auto a = p.linear_operator();
  REQUIRE(a);
  const Vector u = random_vector(p.dofs(), 9);
  Vector fi, fe;
  p.eval_implicit(u, fi);
  p.eval_explicit(u, fe);
  CHECK(((*a) * u - fi - fe).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(fe.isZero());
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(AllenCahnProblem(12, 1.0, 0.04), InvalidArgument);
  CHECK_THROWS_AS(AllenCahnProblem(16, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(HeatProblem(10, 1.0), InvalidArgument);
  CHECK_THROWS_AS(ac_initial_condition(3, 0.04, 64, 1), InvalidArgument);
  CHECK_THROWS_AS(parse_problem_kind("burgers"), InvalidArgument);
  CHECK(parse_problem_kind("ac") == ProblemKind::AllenCahn);
  CHECK(parse_problem_kind("allen_cahn") == ProblemKind::AllenCahn);
  CHECK(parse_problem_kind("heat") == ProblemKind::Heat);
}

TEST_CASE("random radii are reproducible and in range") {
  const auto a = draw_radii(4, 0.04, 42);
  const auto b = draw_radii(4, 0.04, 42);
  const auto c = draw_radii(4, 0.04, 43);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 16);
  for (double r : a) {
    CHECK(r >= 0.5 * 0.04);
    CHECK(r < 3.0 * 0.04);
  }
}

TEST_CASE("initial circle and radius estimate") {
  const Field2D u = ac_initial_condition(1, 0.04, 128, 1, 0.25);
  CHECK(u.maxCoeff() <= 1.0);
  CHECK(u.minCoeff() >= 0.0);
  CHECK(u(64, 64) > 0.99);  // centre of the unit patch is the grid middle
  CHECK(u(0, 0) < 0.01);
  const auto est = measure_radius(u, 1.0);
  CHECK_FALSE(est.degenerate);
  CHECK(est.radius == doctest::Approx(0.25).epsilon(0.02));
  CHECK(measure_radius(Field2D::Zero(8, 8), 1.0).degenerate);
}

TEST_CASE("patches tile the domain with one circle each") {
  const Field2D u = ac_initial_condition(2, 0.04, 64, 3, 0.2);
  // centres at -0.5 and 0.5 in a domain [-1, 1): grid indices 16 and 48
  for (long i : {16L, 48L})
    for (long j : {16L, 48L}) CHECK(u(i, j) > 0.99);
  CHECK(u(0, 0) < 0.01);
  CHECK(measure_radius(u, 2.0).radius == doctest::Approx(std::sqrt(4.0) * 0.2).epsilon(0.03));
}

TEST_CASE("interface resolution in grid cells") {
  CHECK(interface_resolution(0.04, 576, 4.0) == doctest::Approx(40.32));
  CHECK(interface_resolution(0.04, 128, 1.0) == doctest::Approx(35.84));
}

TEST_CASE("snapshot roundtrip is bit exact") {
  const auto dir = testing::scratch_dir("snap");
  const Field2D u = ac_initial_condition(2, 0.04, 32, 8);
  const std::string path = (dir / "u.bin").string();
  write_snapshot(path, u, 2);
  const Snapshot s = read_snapshot(path);
  CHECK(s.patches == 2);
  CHECK(s.field == u);
  CHECK(std::filesystem::file_size(path) == 8 + 32 * 32 * 8);
  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(read_snapshot(path), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("factory builds both levels") {
  ProblemConfig c;
  c.kind = ProblemKind::AllenCahn;
  c.fine_n = 64;
  c.coarse_n = 16;
  CHECK(make_problem(c, Level::Fine)->dofs() == 64 * 64);
  CHECK(make_problem(c, Level::Coarse)->dofs() == 16 * 16);
  CHECK(initial_value(c).size() == 64 * 64);
  c.kind = ProblemKind::Dahlquist;
  c.u0 = 2.5;
  CHECK(initial_value(c)[0] == 2.5);
}
