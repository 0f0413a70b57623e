#pragma once

// Gauss-Jacobi rules for the symmetric weight (1-y^2)^a, barycentric
// interpolation and spectral differentiation on arbitrary node sets.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "blowup/params.hpp"

namespace blowup {

struct QuadratureRule {
  Eigen::VectorXd nodes;    // strictly increasing, inside (-1,1)
  Eigen::VectorXd weights;  // positive
};

/// Total mass of (1-y^2)^a on (-1,1): 2^{2a+1} Gamma(a+1)^2 / Gamma(2a+2).
inline double jacobi_mass(double a) {
  return std::exp((2.0 * a + 1.0) * std::log(2.0) + 2.0 * std::lgamma(a + 1.0) - std::lgamma(2.0 * a + 2.0));
}

/// Closed-form moment int y^k (1-y^2)^a dy (zero for odd k).
inline double jacobi_moment(int k, double a) {
  if (k % 2 == 1) return 0.0;
  const double j = k / 2;
  return std::exp(std::lgamma(j + 0.5) + std::lgamma(a + 1.0) - std::lgamma(j + a + 1.5));
}

namespace detail {

// beta_k of the monic three-term recurrence for weight (1-y^2)^a.
inline double jacobi_beta(int k, double a) {
  const double kk = k;
  if (k == 1) return 1.0 / (2.0 * a + 3.0);  // removable 0/0 at a = -1/2
  return kk * (kk + 2.0 * a) / ((2.0 * kk + 2.0 * a + 1.0) * (2.0 * kk + 2.0 * a - 1.0));
}

// Orthonormal polynomial p_n(x), its derivative, and sum_{k<n} p_k(x)^2.
struct OrthoEval {
  double value;
  double deriv;
  double christoffel_sum;
};

inline OrthoEval eval_orthonormal(int n, double a, double x, double mass) {
  double pm1 = 0.0, dm1 = 0.0;
  double p0 = 1.0 / std::sqrt(mass), d0 = 0.0;
  double sum = p0 * p0;
  double bk = 0.0;
  for (int k = 0; k < n; ++k) {
    const double bk1 = std::sqrt(jacobi_beta(k + 1, a));
    const double p1 = (x * p0 - bk * pm1) / bk1;
    const double d1 = (p0 + x * d0 - bk * dm1) / bk1;
    pm1 = p0;
    dm1 = d0;
    p0 = p1;
    d0 = d1;
    bk = bk1;
    if (k + 1 < n) sum += p0 * p0;
  }
  return {p0, d0, sum};
}

}  // namespace detail

/// n-point Gauss rule for the weight (1-y^2)^a, a > -1. Golub-Welsch seeds,
/// Newton-polished nodes, Christoffel-function weights; exactly symmetric.
inline QuadratureRule gauss_jacobi(int n, double a) {
  if (n < 1) throw std::invalid_argument("gauss_jacobi: n must be positive");
  if (!(a > -1.0)) throw std::invalid_argument("gauss_jacobi: exponent must exceed -1");
  const double mass = jacobi_mass(a);

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(detail::jacobi_beta(k, a));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  Eigen::VectorXd x = es.eigenvalues();

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double xi = x(i);
    for (int it = 0; it < 20; ++it) {
      const auto e = detail::eval_orthonormal(n, a, xi, mass);
      const double dx = e.value / e.deriv;
      xi -= dx;
      if (std::abs(dx) < 1e-17) break;
    }
    rule.nodes(i) = xi;
  }
  std::sort(rule.nodes.data(), rule.nodes.data() + n);
  for (int i = 0; i < n / 2; ++i) {
    const double s = 0.5 * (rule.nodes(n - 1 - i) - rule.nodes(i));
    rule.nodes(i) = -s;
    rule.nodes(n - 1 - i) = s;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  for (int i = 0; i < n; ++i) {
    rule.weights(i) = 1.0 / detail::eval_orthonormal(n, a, rule.nodes(i), mass).christoffel_sum;
  }
  for (int i = 0; i < n / 2; ++i) {
    const double w = 0.5 * (rule.weights(i) + rule.weights(n - 1 - i));
    rule.weights(i) = w;
    rule.weights(n - 1 - i) = w;
  }
  return rule;
}

namespace detail {

using ExtendedMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Barycentric weights in extended precision, normalized to max modulus 1.
// Accumulated in log space so large node counts neither overflow nor
// underflow.
inline std::vector<long double> barycentric_weights_ext(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  std::vector<long double> logmod(n), sign(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    long double acc = 0.0L;
    long double s = 1.0L;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == j) continue;
      const long double diff = static_cast<long double>(x(j)) - static_cast<long double>(x(k));
      acc -= std::log(std::abs(diff));
      if (diff < 0) s = -s;
    }
    logmod[j] = acc;
    sign[j] = s;
  }
  const long double top = *std::max_element(logmod.begin(), logmod.end());
  std::vector<long double> lam(n);
  for (Eigen::Index j = 0; j < n; ++j) lam[j] = sign[j] * std::exp(logmod[j] - top);
  return lam;
}

// First and second differentiation matrices in extended precision: barycentric
// off-diagonals, the recursive formula for the second derivative, and
// negative-sum diagonals.
inline std::pair<ExtendedMatrix, ExtendedMatrix> differentiation_matrices_ext(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const std::vector<long double> lam = barycentric_weights_ext(x);
  ExtendedMatrix D = ExtendedMatrix::Zero(n, n), D2 = ExtendedMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    long double rowsum = 0.0L;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      D(i, j) = (lam[j] / lam[i]) / (static_cast<long double>(x(i)) - static_cast<long double>(x(j)));
      rowsum += D(i, j);
    }
    D(i, i) = -rowsum;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    long double rowsum = 0.0L;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      D2(i, j) = 2.0L * D(i, j) * (D(i, i) - 1.0L / (static_cast<long double>(x(i)) - static_cast<long double>(x(j))));
      rowsum += D2(i, j);
    }
    D2(i, i) = -rowsum;
  }
  return {D, D2};
}

}  // namespace detail

/// Barycentric weights, normalized to max modulus 1.
inline Eigen::VectorXd barycentric_weights(const Eigen::VectorXd& x) {
  const std::vector<long double> lam = detail::barycentric_weights_ext(x);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) out(j) = static_cast<double>(lam[j]);
  return out;
}

/// Spectral differentiation matrix on nodes x, built in extended precision.
inline Eigen::MatrixXd differentiation_matrix(const Eigen::VectorXd& x) {
  return detail::differentiation_matrices_ext(x).first.cast<double>();
}

/// Second-derivative matrix on nodes x.
inline Eigen::MatrixXd second_differentiation_matrix(const Eigen::VectorXd& x) {
  return detail::differentiation_matrices_ext(x).second.cast<double>();
}

/// (1-x^2) D2 - c x D, assembled before rounding to double.
inline Eigen::MatrixXd degenerate_operator_matrix(const Eigen::VectorXd& x, double c) {
  const auto [D, D2] = detail::differentiation_matrices_ext(x);
  const Eigen::Index n = x.size();
  Eigen::MatrixXd L(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const long double xi = x(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      L(i, j) = static_cast<double>((1.0L - xi * xi) * D2(i, j) - static_cast<long double>(c) * xi * D(i, j));
    }
  }
  return L;
}

/// Matrix evaluating the interpolant through (x, values) at points z.
inline Eigen::MatrixXd interpolation_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                                            const Eigen::VectorXd& z) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(z.size(), n);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Eigen::Index hit = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (z(k) == x(j)) {
        hit = j;
        break;
      }
    }
    if (hit >= 0) {
      P(k, hit) = 1.0;
      continue;
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double t = lam(j) / (z(k) - x(j));
      P(k, j) = t;
      denom += t;
    }
    P.row(k) /= denom;
  }
  return P;
}

}  // namespace blowup
