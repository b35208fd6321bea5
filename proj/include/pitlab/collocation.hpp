#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pitlab/errors.hpp"

namespace pitlab {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

// Returns P_n(x) - P_{n-1}(x) and its derivative via the three-term recurrence.
template <typename Scalar>
std::pair<Scalar, Scalar> radau_poly(int n, Scalar x) {
  Scalar p_prev = 1, p = x;            // P_0, P_1
  Scalar dp_prev = 0, dp = 1;          // P_0', P_1'
  if (n == 1) return {p - p_prev, dp - dp_prev};
  for (int k = 1; k < n; ++k) {
    const Scalar p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1);
    const Scalar dp_next = dp_prev + (2 * k + 1) * p;
    p_prev = p;
    p = p_next;
    dp_prev = dp;
    dp = dp_next;
  }
  return {p - p_prev, dp - dp_prev};
}

}  // namespace detail

/// Right Gauss-Radau points on [-1, 1] (roots of P_M - P_{M-1}), ascending,
/// last point exactly 1. Newton with deflation from Chebyshev-Radau guesses.
template <typename Scalar = double>
Vec<Scalar> radau_reference_points(int num_nodes, Scalar tol = Scalar(1e-14),
                                   int max_iter = 100) {
  if (num_nodes < 1) throw InvalidArgument("radau nodes: M must be >= 1");
  const Scalar pi = std::acos(Scalar(-1));
  std::vector<Scalar> roots{Scalar(1)};
  for (int k = 1; k < num_nodes; ++k) {
    Scalar x = std::cos(2 * pi * k / (2 * num_nodes - 1));
    for (int it = 0; it < max_iter; ++it) {
      auto [f, df] = detail::radau_poly(num_nodes, x);
      Scalar deflate = 0;
      for (Scalar r : roots) deflate += Scalar(1) / (x - r);
      const Scalar dx = f / (df - f * deflate);
      x -= dx;
      if (std::abs(dx) <= tol) break;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  for (std::size_t i = 1; i < roots.size(); ++i)
    if (!(roots[i] > roots[i - 1]))
      throw NumericFailure("radau nodes: root iteration produced duplicate points");
  roots.back() = Scalar(1);
  return Eigen::Map<Vec<Scalar>>(roots.data(), static_cast<Eigen::Index>(roots.size()));
}

/// Right Gauss-Radau nodes mapped affinely onto [t0, t1]; last node equals t1.
template <typename Scalar = double>
Vec<Scalar> radau_nodes(int num_nodes, Scalar t0, Scalar t1) {
  if (num_nodes < 1) throw InvalidArgument("radau_nodes: M must be >= 1");
  if (!(t1 > t0)) throw InvalidArgument("radau_nodes: require t1 > t0");
  const Vec<Scalar> ref = radau_reference_points<Scalar>(num_nodes);
  Vec<Scalar> nodes(num_nodes);
  for (int m = 0; m < num_nodes; ++m) {
    const Scalar unit = (ref[m] + 1) / 2;
    nodes[m] = t0 + (t1 - t0) * unit;
  }
  nodes[num_nodes - 1] = t1;
  return nodes;
}

/// Quadrature weights q(m, j) = integral over [t0, nodes[m]] of the j-th
/// Lagrange basis polynomial, relative to a unit step (t1 = nodes.back()).
template <typename Derived>
auto build_q(const Eigen::MatrixBase<Derived>& nodes, typename Derived::Scalar t0) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index M = nodes.size();
  if (M < 1) throw InvalidArgument("build_q: empty node set");
  const Scalar width = nodes[M - 1] - t0;
  if (!(width > 0)) throw InvalidArgument("build_q: last node must exceed t0");
  Vec<Scalar> s(M);
  for (Eigen::Index j = 0; j < M; ++j) s[j] = (nodes[j] - t0) / width;
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = i + 1; j < M; ++j)
      if (s[i] == s[j])
        throw InvalidArgument("build_q: duplicate nodes at indices " + std::to_string(i) +
                              " and " + std::to_string(j));

  Mat<Scalar> q(M, M);
  std::vector<Scalar> coeffs;
  for (Eigen::Index j = 0; j < M; ++j) {
    // Monomial coefficients of l_j, lowest degree first.
    coeffs.assign(1, Scalar(1));
    for (Eigen::Index i = 0; i < M; ++i) {
      if (i == j) continue;
      const Scalar denom = s[j] - s[i];
      std::vector<Scalar> next(coeffs.size() + 1, Scalar(0));
      for (std::size_t k = 0; k < coeffs.size(); ++k) {
        next[k + 1] += coeffs[k] / denom;
        next[k] -= coeffs[k] * s[i] / denom;
      }
      coeffs.swap(next);
    }
    for (Eigen::Index m = 0; m < M; ++m) {
      Scalar acc = 0, power = s[m];
      for (std::size_t k = 0; k < coeffs.size(); ++k) {
        acc += coeffs[k] * power / Scalar(k + 1);
        power *= s[m];
      }
      q(m, j) = acc;
    }
  }
  return q;
}

/// LU trick: returns U^T where Q^T = L U with unit-diagonal L (Doolittle,
/// no pivoting). Throws NumericFailure naming the zero pivot.
template <typename Derived>
auto build_qdelta_lu(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index M = q.rows();
  if (q.cols() != M) throw InvalidArgument("build_qdelta_lu: Q must be square");
  Mat<Scalar> a = q.transpose();
  Mat<Scalar> upper = Mat<Scalar>::Zero(M, M);
  Mat<Scalar> lower = Mat<Scalar>::Identity(M, M);
  for (Eigen::Index k = 0; k < M; ++k) {
    for (Eigen::Index j = k; j < M; ++j) {
      Scalar sum = a(k, j);
      for (Eigen::Index p = 0; p < k; ++p) sum -= lower(k, p) * upper(p, j);
      upper(k, j) = sum;
    }
    if (upper(k, k) == Scalar(0))
      throw NumericFailure("build_qdelta_lu: zero pivot at index " + std::to_string(k));
    for (Eigen::Index i = k + 1; i < M; ++i) {
      Scalar sum = a(i, k);
      for (Eigen::Index p = 0; p < k; ++p) sum -= lower(i, p) * upper(p, k);
      lower(i, k) = sum / upper(k, k);
    }
  }
  return Mat<Scalar>(upper.transpose());
}

/// Explicit-Euler preconditioner: row m holds the node spacings
/// s[j+1] - s[j] for j < m (unit interval); first row and diagonal are zero.
template <typename Derived>
auto build_qdelta_ee(const Eigen::MatrixBase<Derived>& nodes, typename Derived::Scalar t0) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index M = nodes.size();
  if (M < 1) throw InvalidArgument("build_qdelta_ee: empty node set");
  const Scalar width = nodes[M - 1] - t0;
  if (!(width > 0)) throw InvalidArgument("build_qdelta_ee: last node must exceed t0");
  Mat<Scalar> qe = Mat<Scalar>::Zero(M, M);
  for (Eigen::Index m = 1; m < M; ++m)
    for (Eigen::Index j = 0; j < m; ++j) qe(m, j) = (nodes[j + 1] - nodes[j]) / width;
  return qe;
}

/// Quadrature data for one step on the unit interval; the step size is
/// applied at sweep time. Immutable after construction.
template <typename Scalar = double>
struct CollocationTable {
  int num_nodes = 0;
  Vec<Scalar> nodes;   // unit interval, last node = 1
  Mat<Scalar> q;
  Mat<Scalar> qd_implicit;
  Mat<Scalar> qd_explicit;

  /// Weights that carry the last node value to the next step's start
  /// (right-Radau: picks the last node).
  Vec<Scalar> end_weights() const {
    Vec<Scalar> h = Vec<Scalar>::Zero(num_nodes);
    h[num_nodes - 1] = 1;
    return h;
  }
};

template <typename Scalar = double>
CollocationTable<Scalar> make_radau_table(int num_nodes) {
  CollocationTable<Scalar> tab;
  tab.num_nodes = num_nodes;
  tab.nodes = radau_nodes<Scalar>(num_nodes, Scalar(0), Scalar(1));
  tab.q = build_q(tab.nodes, Scalar(0));
  tab.qd_implicit = build_qdelta_lu(tab.q);
  tab.qd_explicit = build_qdelta_ee(tab.nodes, Scalar(0));
  return tab;
}

using Table = CollocationTable<double>;

}  // namespace pitlab
