#include "pitlab/transfer.hpp"

#include <string>

#include "pitlab/errors.hpp"

namespace pitlab {

namespace {

void check_sizes(long fine_n, long coarse_n) {
  if (!is_power_of_two(fine_n) || !is_power_of_two(coarse_n) || coarse_n > fine_n)
    throw InvalidArgument("transfer: need power-of-two grids with coarse_N <= fine_N (got " +
                          std::to_string(fine_n) + ", " + std::to_string(coarse_n) + ")");
}

// Fine modes feeding coarse mode m in one dimension.
int fine_partners(long m, long coarse_n, long fine_n, long out[2]) {
  out[0] = mode_index(m, fine_n);
  if (m == -coarse_n / 2 && coarse_n < fine_n) {
    out[1] = mode_index(coarse_n / 2, fine_n);
    return 2;
  }
  return 1;
}

}  // namespace

Field2D restrict_space(const Field2D& fine, long coarse_n) {
  const long fine_n = fine.rows();
  if (fine.cols() != fine_n) throw InvalidArgument("restrict_space: grid must be square");
  check_sizes(fine_n, coarse_n);
  if (coarse_n == fine_n) return fine;
  const Spectrum2D fs = forward_transform(fine);
  Spectrum2D cs = Spectrum2D::Zero(coarse_n, coarse_n);
  long rows[2], cols[2];
  for (long r = 0; r < coarse_n; ++r) {
    const int nr = fine_partners(mode_number(r, coarse_n), coarse_n, fine_n, rows);
    for (long c = 0; c < coarse_n; ++c) {
      const int nc = fine_partners(mode_number(c, coarse_n), coarse_n, fine_n, cols);
      for (int a = 0; a < nr; ++a)
        for (int b = 0; b < nc; ++b) cs(r, c) += fs(rows[a], cols[b]);
    }
  }
  return inverse_transform(cs);
}

Field2D prolong_space(const Field2D& coarse, long fine_n) {
  const long coarse_n = coarse.rows();
  if (coarse.cols() != coarse_n) throw InvalidArgument("prolong_space: grid must be square");
  check_sizes(fine_n, coarse_n);
  if (coarse_n == fine_n) return coarse;
  const Spectrum2D cs = forward_transform(coarse);
  Spectrum2D fs = Spectrum2D::Zero(fine_n, fine_n);
  long rows[2], cols[2];
  for (long r = 0; r < coarse_n; ++r) {
    const int nr = fine_partners(mode_number(r, coarse_n), coarse_n, fine_n, rows);
    for (long c = 0; c < coarse_n; ++c) {
      const int nc = fine_partners(mode_number(c, coarse_n), coarse_n, fine_n, cols);
      const std::complex<double> share = cs(r, c) / double(nr * nc);
      for (int a = 0; a < nr; ++a)
        for (int b = 0; b < nc; ++b) fs(rows[a], cols[b]) += share;
    }
  }
  return inverse_transform(fs);
}

FourierTransfer::FourierTransfer(long fine_n, long coarse_n) : fine_n_(fine_n), coarse_n_(coarse_n) {
  check_sizes(fine_n, coarse_n);
}

Vector FourierTransfer::restrict_space(const Vector& fine) const {
  if (fine.size() != fine_n_ * fine_n_) throw InvalidArgument("restrict_space: size mismatch");
  return as_vector(pitlab::restrict_space(Field2D(as_field(fine, fine_n_)), coarse_n_));
}

Vector FourierTransfer::prolong_space(const Vector& coarse) const {
  if (coarse.size() != coarse_n_ * coarse_n_) throw InvalidArgument("prolong_space: size mismatch");
  return as_vector(pitlab::prolong_space(Field2D(as_field(coarse, coarse_n_)), fine_n_));
}

LevelPair make_level_pair(const ProblemConfig& config, int num_nodes) {
  LevelPair pair;
  pair.fine = make_problem(config, Level::Fine);
  pair.coarse = make_problem(config, Level::Coarse);
  if (config.kind == ProblemKind::Dahlquist)
    pair.transfer = std::make_shared<IdentityTransfer>();
  else
    pair.transfer = std::make_shared<FourierTransfer>(config.fine_n, config.coarse_n);
  pair.fine_table = make_radau_table(num_nodes);
  pair.coarse_table = make_radau_table(num_nodes);
  return pair;
}

std::vector<Vector> compute_fas_tau(const LevelState& fine, const LevelState& coarse,
                                    const LevelPair& pair) {
  if (fine.num_nodes() != coarse.num_nodes() ||
      fine.num_nodes() != pair.fine_table.num_nodes ||
      coarse.num_nodes() != pair.coarse_table.num_nodes)
    throw InvalidArgument("compute_fas_tau: level node counts differ");
  const std::vector<Vector> fine_int = integrate(fine, pair.fine_table);
  const std::vector<Vector> coarse_int = integrate(coarse, pair.coarse_table);
  std::vector<Vector> tau(coarse.num_nodes());
  for (int m = 0; m < coarse.num_nodes(); ++m) {
    tau[m] = pair.transfer->restrict_space(fine_int[m]) - coarse_int[m];
    if (fine.tau.size() == fine.u.size() && !fine.tau[m].isZero(0.0))
      tau[m] += pair.transfer->restrict_space(fine.tau[m]);
  }
  return tau;
}

void restrict_state(const LevelState& fine, LevelState& coarse, const LevelPair& pair) {
  const int M = fine.num_nodes();
  coarse.dt = fine.dt;
  coarse.u0 = pair.transfer->restrict_space(fine.u0);
  coarse.u.resize(M);
  for (int m = 0; m < M; ++m) coarse.u[m] = pair.transfer->restrict_space(fine.u[m]);
  evaluate_rhs(coarse, *pair.coarse);
  coarse.tau = compute_fas_tau(fine, coarse, pair);
}

void prolong_correction(LevelState& fine, const LevelState& coarse,
                        const std::vector<Vector>& coarse_before, const LevelPair& pair) {
  for (int m = 0; m < fine.num_nodes(); ++m)
    fine.u[m] += pair.transfer->prolong_space(coarse.u[m] - coarse_before[m]);
  evaluate_rhs(fine, *pair.fine);
}

}  // namespace pitlab
