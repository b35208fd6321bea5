#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pitlab/spectral.hpp"

namespace pitlab {

using Vector = Eigen::VectorXd;

/// Split right-hand side f = f_implicit + f_explicit on a flat vector of
/// degrees of freedom. Implementations are immutable and thread-safe.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual Eigen::Index dofs() const = 0;
  virtual std::string name() const = 0;

  virtual void eval_implicit(const Vector& u, Vector& out) const = 0;
  virtual void eval_explicit(const Vector& u, Vector& out) const = 0;

  /// Solves (I - factor * A_implicit) out = rhs.
  virtual void implicit_solve(const Vector& rhs, double factor, Vector& out) const = 0;

  /// Dense matrix A with f(u) = A u, when the full right-hand side is linear.
  virtual std::optional<Eigen::MatrixXd> linear_operator() const { return std::nullopt; }
};

/// u' = lambda_implicit u + lambda_explicit u, one degree of freedom.
class DahlquistProblem final : public Problem {
 public:
  DahlquistProblem(double lambda_implicit, double lambda_explicit)
      : lambda_implicit_(lambda_implicit), lambda_explicit_(lambda_explicit) {}

  Eigen::Index dofs() const override { return 1; }
  std::string name() const override { return "dahlquist"; }
  void eval_implicit(const Vector& u, Vector& out) const override;
  void eval_explicit(const Vector& u, Vector& out) const override;
  void implicit_solve(const Vector& rhs, double factor, Vector& out) const override;
  std::optional<Eigen::MatrixXd> linear_operator() const override;

 private:
  double lambda_implicit_;
  double lambda_explicit_;
};

enum class AcPart { Implicit, Explicit };

/// Periodic 2-D Allen-Cahn, u_t = lap(u) - 2/eps^2 u (1-u)(1-2u), with the
/// Laplacian treated implicitly in Fourier space.
class AllenCahnProblem final : public Problem {
 public:
  AllenCahnProblem(long n, double length, double eps);

  Eigen::Index dofs() const override { return n_ * n_; }
  std::string name() const override { return "allen-cahn"; }
  void eval_implicit(const Vector& u, Vector& out) const override;
  void eval_explicit(const Vector& u, Vector& out) const override;
  void implicit_solve(const Vector& rhs, double factor, Vector& out) const override;

  long grid_size() const { return n_; }
  double length() const { return length_; }
  double eps() const { return eps_; }

 private:
  long n_;
  double length_;
  double eps_;
};

/// Periodic heat equation u_t = lap(u); linear, used as a PDE test problem.
class HeatProblem final : public Problem {
 public:
  HeatProblem(long n, double length);

  Eigen::Index dofs() const override { return n_ * n_; }
  std::string name() const override { return "heat"; }
  void eval_implicit(const Vector& u, Vector& out) const override;
  void eval_explicit(const Vector& u, Vector& out) const override;
  void implicit_solve(const Vector& rhs, double factor, Vector& out) const override;
  std::optional<Eigen::MatrixXd> linear_operator() const override;

 private:
  long n_;
  double length_;
};

// Field-level operations.

Field2D laplacian(const Field2D& field, double length);
Field2D ac_eval(const Field2D& field, double length, double eps, AcPart which);
/// Solves (I - factor * lap) u = rhs diagonally in Fourier space.
Field2D ac_implicit_solve(const Field2D& rhs, double length, double factor);

/// Grid coordinate of index i on an n-point grid covering [-L/2, L/2).
inline double grid_coordinate(long i, long n, double length) {
  return -length / 2 + length * double(i) / double(n);
}

/// Radii R(i, j) ~ U[0.5 eps, 3 eps], patch-row-major. Uses mt19937_64
/// seeded with `seed` and maps each 64-bit draw x to (x >> 11) * 2^-53.
std::vector<double> draw_radii(int patches, double eps, std::uint64_t seed);

/// Sum of tanh circles, one centred in each unit patch of a patches x patches
/// domain. `radius` overrides the random radii.
Field2D ac_initial_condition(int patches, double eps, long n, std::uint64_t seed,
                             std::optional<double> radius = std::nullopt);

struct RadiusEstimate {
  double radius = 0;
  bool degenerate = false;  // nonpositive phase-field area
};

/// r = sqrt(A / pi) with A = h^2 * sum(u).
RadiusEstimate measure_radius(const Field2D& field, double length);

/// Interface width 7 eps measured in grid cells.
double interface_resolution(double eps, long n, double length);

// Flat binary snapshot: u32 N, u32 patches (LE), then N^2 LE doubles row-major.
void write_snapshot(const std::string& path, const Field2D& field, std::uint32_t patches);
struct Snapshot {
  Field2D field;
  std::uint32_t patches = 0;
};
Snapshot read_snapshot(const std::string& path);

inline Eigen::Map<const Field2D> as_field(const Vector& u, long n) { return {u.data(), n, n}; }
inline Vector as_vector(const Field2D& f) {
  return Eigen::Map<const Vector>(f.data(), f.size());
}

enum class ProblemKind { Dahlquist, AllenCahn, Heat };

std::string to_string(ProblemKind kind);
ProblemKind parse_problem_kind(const std::string& text);

/// Everything needed to build the fine and coarse problems of a run.
struct ProblemConfig {
  ProblemKind kind = ProblemKind::Dahlquist;
  double lambda_implicit = -1.0;
  double lambda_explicit = 0.0;
  double u0 = 1.0;
  long fine_n = 128;
  long coarse_n = 32;
  int patches = 1;
  double eps = 0.04;
  std::uint64_t seed = 1;
  std::optional<double> radius;
};

enum class Level { Fine, Coarse };

std::shared_ptr<const Problem> make_problem(const ProblemConfig& config, Level level);
Vector initial_value(const ProblemConfig& config);

}  // namespace pitlab
