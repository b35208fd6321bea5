#pragma once

#include <memory>
#include <vector>

#include "pitlab/collocation.hpp"
#include "pitlab/problems.hpp"
#include "pitlab/sweeper.hpp"

namespace pitlab {

/// Spatial restriction (fine -> coarse) and prolongation (coarse -> fine).
class SpaceTransfer {
 public:
  virtual ~SpaceTransfer() = default;
  virtual Vector restrict_space(const Vector& fine) const = 0;
  virtual Vector prolong_space(const Vector& coarse) const = 0;
};

/// Both levels share the same spatial representation.
class IdentityTransfer final : public SpaceTransfer {
 public:
  Vector restrict_space(const Vector& fine) const override { return fine; }
  Vector prolong_space(const Vector& coarse) const override { return coarse; }
};

/// Fourier truncation / zero padding between N_f x N_f and N_c x N_c grids.
class FourierTransfer final : public SpaceTransfer {
 public:
  FourierTransfer(long fine_n, long coarse_n);
  Vector restrict_space(const Vector& fine) const override;
  Vector prolong_space(const Vector& coarse) const override;

 private:
  long fine_n_;
  long coarse_n_;
};

/// Keeps modes |m| < N_c/2; the fine +-N_c/2 pair folds into the coarse
/// Nyquist mode so that restrict(prolong(c)) == c.
Field2D restrict_space(const Field2D& fine, long coarse_n);

/// Zero-pads the spectrum; the coarse Nyquist mode is split evenly onto +-N_c/2.
Field2D prolong_space(const Field2D& coarse, long fine_n);

/// Fine and coarse problems with their quadrature tables (same node count).
struct LevelPair {
  std::shared_ptr<const Problem> fine;
  std::shared_ptr<const Problem> coarse;
  std::shared_ptr<const SpaceTransfer> transfer;
  Table fine_table;
  Table coarse_table;
};

LevelPair make_level_pair(const ProblemConfig& config, int num_nodes);

/// tau_H[m] = R(dt Q^h f^h(u)) - dt Q^H f^H(R u) + R(tau_h[m]), step-local, so that
/// R u solves the coarse problem whenever u solves the fine one.
/// `coarse` must hold R(fine.u) with its right-hand side evaluated.
std::vector<Vector> compute_fas_tau(const LevelState& fine, const LevelState& coarse,
                                    const LevelPair& pair);

/// Coarse state from the fine one: restricted u0 and node values, fresh
/// right-hand side, FAS correction.
void restrict_state(const LevelState& fine, LevelState& coarse, const LevelPair& pair);

/// fine.u[m] += P(coarse.u[m] - coarse_before[m]), then re-evaluates fine f.
void prolong_correction(LevelState& fine, const LevelState& coarse,
                        const std::vector<Vector>& coarse_before, const LevelPair& pair);

}  // namespace pitlab
