#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "pitlab/errors.hpp"

namespace pitlab {

/// N x N real grid over [-L/2, L/2]^2, row index = y, column index = x.
template <typename Real>
using FieldT = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using SpectrumT =
    Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Field2D = FieldT<double>;
using Spectrum2D = SpectrumT<double>;

constexpr bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

/// Signed mode number of storage index i on an n-point grid, in [-n/2, n/2).
constexpr long mode_number(long i, long n) { return i < n / 2 ? i : i - n; }

/// Storage index of signed mode m on an n-point grid.
constexpr long mode_index(long m, long n) { return m >= 0 ? m : m + n; }

/// Precomputed twiddles and bit reversal for one power-of-two length.
template <typename Real>
class FftPlan {
 public:
  explicit FftPlan(long n) : n_(n), rev_(n), twiddle_(n / 2) {
    if (!is_power_of_two(n)) throw InvalidArgument("fft: length must be a power of two");
    int bits = 0;
    while ((1L << bits) < n) ++bits;
    for (long i = 0; i < n; ++i) {
      long r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (1L << b)) r |= 1L << (bits - 1 - b);
      rev_[i] = r;
    }
    const Real two_pi = 2 * std::numbers::pi_v<Real>;
    for (long k = 0; k < n / 2; ++k)
      twiddle_[k] = std::polar(Real(1), -two_pi * Real(k) / Real(n));
  }

  long size() const { return n_; }

  /// Unnormalized in-place transform; sign -1 forward, +1 inverse.
  void execute(std::span<std::complex<Real>> data, bool inverse) const {
    for (long i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(data[i], data[rev_[i]]);
    for (long len = 2; len <= n_; len <<= 1) {
      const long half = len / 2, stride = n_ / len;
      for (long start = 0; start < n_; start += len) {
        for (long k = 0; k < half; ++k) {
          std::complex<Real> w = twiddle_[k * stride];
          if (inverse) w = std::conj(w);
          const std::complex<Real> a = data[start + k];
          const std::complex<Real> b = data[start + k + half] * w;
          data[start + k] = a + b;
          data[start + k + half] = a - b;
        }
      }
    }
  }

 private:
  long n_;
  std::vector<long> rev_;
  std::vector<std::complex<Real>> twiddle_;
};

namespace detail {

template <typename Real>
void transform_2d(SpectrumT<Real>& a, bool inverse) {
  const long n = a.rows();
  const FftPlan<Real> plan(n);
  for (long r = 0; r < n; ++r) plan.execute({a.row(r).data(), static_cast<std::size_t>(n)}, inverse);
  std::vector<std::complex<Real>> column(n);
  for (long c = 0; c < n; ++c) {
    for (long r = 0; r < n; ++r) column[r] = a(r, c);
    plan.execute(column, inverse);
    for (long r = 0; r < n; ++r) a(r, c) = column[r];
  }
}

template <typename Derived>
void require_square_pow2(const Eigen::EigenBase<Derived>& f, const char* who) {
  if (f.rows() != f.cols() || !is_power_of_two(f.rows()))
    throw InvalidArgument(std::string(who) + ": grid must be N x N with N a power of two");
}

}  // namespace detail

/// Fourier coefficients c(my, mx) with u(x, y) = sum c * exp(i (kx x + ky y)),
/// i.e. the forward transform is normalized by 1/N^2.
template <typename Real>
SpectrumT<Real> forward_transform(const FieldT<Real>& field) {
  detail::require_square_pow2(field, "forward_transform");
  SpectrumT<Real> a = field.template cast<std::complex<Real>>();
  detail::transform_2d(a, false);
  a /= Real(field.rows()) * Real(field.cols());
  return a;
}

/// Inverse of forward_transform; the imaginary residue is discarded.
template <typename Real>
FieldT<Real> inverse_transform(const SpectrumT<Real>& spectrum) {
  detail::require_square_pow2(spectrum, "inverse_transform");
  SpectrumT<Real> a = spectrum;
  detail::transform_2d(a, true);
  return a.real();
}

/// |k|^2 = kx^2 + ky^2 for storage index (row, col) on an n-grid of length L.
template <typename Real>
Real wavenumber_squared(long row, long col, long n, Real length) {
  const Real scale = 2 * std::numbers::pi_v<Real> / length;
  const Real ky = scale * Real(mode_number(row, n));
  const Real kx = scale * Real(mode_number(col, n));
  return kx * kx + ky * ky;
}

}  // namespace pitlab
