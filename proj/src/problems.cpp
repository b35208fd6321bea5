#include "pitlab/problems.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "pitlab/errors.hpp"

namespace pitlab {

void DahlquistProblem::eval_implicit(const Vector& u, Vector& out) const { out = lambda_implicit_ * u; }

void DahlquistProblem::eval_explicit(const Vector& u, Vector& out) const { out = lambda_explicit_ * u; }

void DahlquistProblem::implicit_solve(const Vector& rhs, double factor, Vector& out) const {
  const double denom = 1.0 - factor * lambda_implicit_;
  if (std::abs(denom) <= 1e-14) throw NumericFailure("dahlquist: singular implicit system");
  out = rhs / denom;
}

std::optional<Eigen::MatrixXd> DahlquistProblem::linear_operator() const {
  return Eigen::MatrixXd::Constant(1, 1, lambda_implicit_ + lambda_explicit_);
}

// Field operations ----------------------------------------------------------

Field2D laplacian(const Field2D& field, double length) {
  Spectrum2D spec = forward_transform(field);
  const long n = field.rows();
  for (long r = 0; r < n; ++r)
    for (long c = 0; c < n; ++c) spec(r, c) *= -wavenumber_squared(r, c, n, length);
  return inverse_transform(spec);
}

Field2D ac_eval(const Field2D& field, double length, double eps, AcPart which) {
  if (which == AcPart::Implicit) return laplacian(field, length);
  const double scale = -2.0 / (eps * eps);
  return field.unaryExpr([scale](double u) { return scale * u * (1.0 - u) * (1.0 - 2.0 * u); });
}

Field2D ac_implicit_solve(const Field2D& rhs, double length, double factor) {
  if (factor < 0) throw InvalidArgument("ac_implicit_solve: factor must be >= 0");
  if (factor == 0) return rhs;
  Spectrum2D spec = forward_transform(rhs);
  const long n = rhs.rows();
  for (long r = 0; r < n; ++r)
    for (long c = 0; c < n; ++c) spec(r, c) /= 1.0 + factor * wavenumber_squared(r, c, n, length);
  return inverse_transform(spec);
}

// Problems ------------------------------------------------------------------

AllenCahnProblem::AllenCahnProblem(long n, double length, double eps)
    : n_(n), length_(length), eps_(eps) {
  if (!is_power_of_two(n)) throw InvalidArgument("allen-cahn: N must be a power of two");
  if (!(eps > 0)) throw InvalidArgument("allen-cahn: eps must be positive");
  if (!(length > 0)) throw InvalidArgument("allen-cahn: domain length must be positive");
}

void AllenCahnProblem::eval_implicit(const Vector& u, Vector& out) const {
  out = as_vector(laplacian(as_field(u, n_), length_));
}

void AllenCahnProblem::eval_explicit(const Vector& u, Vector& out) const {
  const double scale = -2.0 / (eps_ * eps_);
  out = u.unaryExpr([scale](double v) { return scale * v * (1.0 - v) * (1.0 - 2.0 * v); });
}

void AllenCahnProblem::implicit_solve(const Vector& rhs, double factor, Vector& out) const {
  out = as_vector(ac_implicit_solve(as_field(rhs, n_), length_, factor));
}

HeatProblem::HeatProblem(long n, double length) : n_(n), length_(length) {
  if (!is_power_of_two(n)) throw InvalidArgument("heat: N must be a power of two");
}

void HeatProblem::eval_implicit(const Vector& u, Vector& out) const {
  out = as_vector(laplacian(as_field(u, n_), length_));
}

void HeatProblem::eval_explicit(const Vector& u, Vector& out) const { out = Vector::Zero(u.size()); }

void HeatProblem::implicit_solve(const Vector& rhs, double factor, Vector& out) const {
  out = as_vector(ac_implicit_solve(as_field(rhs, n_), length_, factor));
}

std::optional<Eigen::MatrixXd> HeatProblem::linear_operator() const {
  const Eigen::Index d = dofs();
  Eigen::MatrixXd a(d, d);
  Vector e = Vector::Zero(d), col;
  for (Eigen::Index j = 0; j < d; ++j) {
    e[j] = 1.0;
    eval_implicit(e, col);
    a.col(j) = col;
    e[j] = 0.0;
  }
  return a;
}

// Initial conditions and diagnostics ---------------------------------------

std::vector<double> draw_radii(int patches, double eps, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> radii(static_cast<std::size_t>(patches) * patches);
  for (double& r : radii) {
    const double unit = double(gen() >> 11) * 0x1.0p-53;
    r = eps * (0.5 + 2.5 * unit);
  }
  return radii;
}

Field2D ac_initial_condition(int patches, double eps, long n, std::uint64_t seed,
                             std::optional<double> radius) {
  if (patches < 1) throw InvalidArgument("initial condition: need at least one patch");
  if (n % patches != 0)
    throw InvalidArgument("initial condition: N must be divisible by the patch count");
  if (!(eps > 0)) throw InvalidArgument("initial condition: eps must be positive");
  const double length = patches;
  std::vector<double> radii = draw_radii(patches, eps, seed);
  if (radius) radii.assign(radii.size(), *radius);

  const double width = std::numbers::sqrt2 * eps;
  auto periodic = [length](double d) { return d - length * std::round(d / length); };
  Field2D u = Field2D::Zero(n, n);
  for (int pi = 0; pi < patches; ++pi) {
    for (int pj = 0; pj < patches; ++pj) {
      const double cy = -length / 2 + pi + 0.5;
      const double cx = -length / 2 + pj + 0.5;
      const double r0 = radii[static_cast<std::size_t>(pi) * patches + pj];
      for (long i = 0; i < n; ++i) {
        const double dy = periodic(grid_coordinate(i, n, length) - cy);
        for (long j = 0; j < n; ++j) {
          const double dx = periodic(grid_coordinate(j, n, length) - cx);
          u(i, j) += 0.5 * (1.0 + std::tanh((r0 - std::hypot(dx, dy)) / width));
        }
      }
    }
  }
  return u;
}

RadiusEstimate measure_radius(const Field2D& field, double length) {
  const double h = length / double(field.rows());
  const double area = h * h * field.sum();
  if (!(area > 0)) return {0.0, true};
  return {std::sqrt(area / std::numbers::pi), false};
}

double interface_resolution(double eps, long n, double length) { return 7.0 * eps * double(n) / length; }

// Snapshots ----------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw Error("snapshot: truncated file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= U(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_snapshot(const std::string& path, const Field2D& field, std::uint32_t patches) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("snapshot: cannot open " + path);
  put_le(os, static_cast<std::uint32_t>(field.rows()));
  put_le(os, patches);
  for (long i = 0; i < field.rows(); ++i)
    for (long j = 0; j < field.cols(); ++j) put_le(os, field(i, j));
  if (!os) throw Error("snapshot: write failed for " + path);
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("snapshot: cannot open " + path);
  Snapshot snap;
  const auto n = get_le<std::uint32_t>(is);
  snap.patches = get_le<std::uint32_t>(is);
  snap.field.resize(n, n);
  for (long i = 0; i < long(n); ++i)
    for (long j = 0; j < long(n); ++j) snap.field(i, j) = get_le<double>(is);
  return snap;
}

// Configuration ------------------------------------------------------------

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Dahlquist: return "dahlquist";
    case ProblemKind::AllenCahn: return "allen-cahn";
    case ProblemKind::Heat: return "heat";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(const std::string& text) {
  if (text == "dahlquist") return ProblemKind::Dahlquist;
  if (text == "allen-cahn" || text == "allen_cahn" || text == "ac") return ProblemKind::AllenCahn;
  if (text == "heat") return ProblemKind::Heat;
  throw InvalidArgument("unknown problem '" + text + "'");
}

std::shared_ptr<const Problem> make_problem(const ProblemConfig& config, Level level) {
  const long n = level == Level::Fine ? config.fine_n : config.coarse_n;
  switch (config.kind) {
    case ProblemKind::Dahlquist:
      return std::make_shared<DahlquistProblem>(config.lambda_implicit, config.lambda_explicit);
    case ProblemKind::AllenCahn:
      return std::make_shared<AllenCahnProblem>(n, double(config.patches), config.eps);
    case ProblemKind::Heat:
      return std::make_shared<HeatProblem>(n, double(config.patches));
  }
  throw InvalidArgument("make_problem: unknown kind");
}

Vector initial_value(const ProblemConfig& config) {
  switch (config.kind) {
    case ProblemKind::Dahlquist: return Vector::Constant(1, config.u0);
    case ProblemKind::AllenCahn:
    case ProblemKind::Heat:
      return as_vector(
          ac_initial_condition(config.patches, config.eps, config.fine_n, config.seed, config.radius));
  }
  throw InvalidArgument("initial_value: unknown kind");
}

}  // namespace pitlab
