#pragma once

// Linearization of the self-similar equation around kappa(d,.)e1: the scalar
// operators Lbar_d (coordinate 1) and Ltilde_d (coordinates 2..m), their
// nonnegative modes, the dual modes W normalized against phi, projectors and
// the quadratic forms used on the stable subspaces.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "blowup/params.hpp"
#include "blowup/solitons.hpp"
#include "blowup/weighted_space.hpp"

namespace blowup {

inline double psi_bar(double d, double y, double p) {
  return p * std::pow(kappa(d, y, p), p - 1.0) - linear_coefficient(p);
}

inline double psi_tilde(double d, double y, double p) {
  return std::pow(kappa(d, y, p), p - 1.0) - linear_coefficient(p);
}

inline ScalarField psi_bar_field(double d, const WeightedGrid& g) {
  return g.sample([&](double y) { return psi_bar(d, y, g.p()); });
}

inline ScalarField psi_tilde_field(double d, const WeightedGrid& g) {
  return g.sample([&](double y) { return psi_tilde(d, y, g.p()); });
}

namespace detail {

inline ScalarPair apply_scalar_linearization(const ScalarField& psi, const ScalarPair& q, const WeightedGrid& g) {
  const ScalarField dq2 = g.diff() * q.second;
  ScalarPair out;
  out.first = q.second;
  out.second = g.L_matrix() * q.first + psi.cwiseProduct(q.first) - damping_coefficient(g.p()) * q.second -
               2.0 * g.nodes().cwiseProduct(dq2);
  return out;
}

}  // namespace detail

inline ScalarPair apply_Lbar(double d, const ScalarPair& q, const WeightedGrid& g) {
  return detail::apply_scalar_linearization(psi_bar_field(d, g), q, g);
}

inline ScalarPair apply_Ltilde(double d, const ScalarPair& q, const WeightedGrid& g) {
  return detail::apply_scalar_linearization(psi_tilde_field(d, g), q, g);
}

/// Vector linearization, built from the derivative of |w|^{p-1}w at kappa e1:
/// h -> kappa^{p-1} h + (p-1) kappa^{p-1} (h.e1) e1.
inline HState apply_Ld(double d, const HState& q, const WeightedGrid& g) {
  const double p = g.p();
  const ScalarField k = kappa_field(d, g);
  const ScalarField kp = k.array().pow(p - 1.0).matrix();
  HState out;
  out.q1 = q.q2;
  out.q2 = g.L_matrix() * q.q1 - linear_coefficient(p) * q.q1 + kp.asDiagonal() * q.q1 -
           damping_coefficient(p) * q.q2 - 2.0 * (g.nodes().asDiagonal() * (g.diff() * q.q2));
  out.q2.col(0) += (p - 1.0) * kp.cwiseProduct(q.q1.col(0));
  return out;
}

/// Nonlinear part f_d(q1) of the equation for q = (w, ws) - (kappa e1, 0).
inline VectorField f_d(const VectorField& q1, double d, const WeightedGrid& g) {
  const double p = g.p();
  const ScalarField k = kappa_field(d, g);
  VectorField out(q1.rows(), q1.cols());
  for (Eigen::Index i = 0; i < q1.rows(); ++i) {
    Eigen::RowVectorXd w = q1.row(i);
    w(0) += k(i);
    const double np = std::pow(w.norm(), p - 1.0);
    const double kp = std::pow(k(i), p - 1.0);
    out(i, 0) = np * w(0) - kp * k(i) - p * kp * q1(i, 0);
    for (Eigen::Index j = 1; j < q1.cols(); ++j) out(i, j) = (np - kp) * q1(i, j);
  }
  return out;
}

/// Eigenfunction of Lbar_d for lambda in {0, 1}.
inline ScalarPair F_bar(double d, int lambda, const WeightedGrid& g) {
  check_lorentz(d);
  const double p = g.p();
  const double e = (p + 1.0) / (p - 1.0);
  ScalarPair out;
  if (lambda == 1) {
    const double pre = std::pow(1.0 - d * d, p / (p - 1.0));
    out.first = g.sample([&](double y) { return pre * std::pow(1.0 + d * y, -e); });
    out.second = out.first;
  } else if (lambda == 0) {
    const double pre = std::pow(1.0 - d * d, 1.0 / (p - 1.0));
    out.first = g.sample([&](double y) { return pre * (y + d) * std::pow(1.0 + d * y, -e); });
    out.second = ScalarField::Zero(g.size());
  } else {
    throw std::invalid_argument("F_bar: lambda must be 0 or 1");
  }
  return out;
}

/// Null mode (kappa(d,.), 0) of Ltilde_d.
inline ScalarPair F_tilde(double d, const WeightedGrid& g) {
  return {kappa_field(d, g), ScalarField::Zero(g.size())};
}

/// Dual mode with phi(W, F) = 1 for the same eigenvalue.
struct EigenData {
  double d = 0.0;
  int lambda = 0;
  ScalarPair F;
  ScalarPair W;
  /// Constant multiplying the unnormalized second component of W so that
  /// phi(W, F) = 1.
  double c_norm = 1.0;
  /// Closed-form d-independent constant (cbar_lambda or ctilde_0).
  double c_closed = 1.0;
};

namespace detail {

// Dual mode of an operator whose adjoint second row is
// -L r1 + r1 + (p+3)/(p-1) r2 + 2y r2' - 8/(p-1) r2/(1-y^2): the first
// component solves (I - L) r1 = (lambda - (p+3)/(p-1)) r2 - 2y r2'
// + 8/(p-1) r2/(1-y^2), in Galerkin form so the singular term is integrated
// exactly against the basis.
template <class F2, class DF2>
ScalarPair dual_mode(int lambda, const F2& r2, const DF2& dr2, const WeightedGrid& g) {
  const double p = g.p();
  const ScalarField v2 = g.sample(r2);
  const ScalarField regular = g.sample([&](double y) {
    return (lambda - damping_coefficient(p)) * r2(y) - 2.0 * y * dr2(y);
  });
  ScalarField loads = g.weights().cwiseProduct(regular);
  loads += (8.0 / (p - 1.0)) * g.singular_loads(r2);
  ScalarPair out{g.resolvent_solve_loads(loads), v2};
  return out;
}

inline void normalize_dual(EigenData& e, const WeightedGrid& g) {
  const double n = phi_pair(e.W, e.F, g);
  if (!std::isfinite(n) || std::abs(n) < 1e-14) throw NumericalFailure("dual mode normalization degenerate");
  e.c_norm = 1.0 / n;
  e.W = e.c_norm * e.W;
}

}  // namespace detail

/// cbar_lambda from 1/cbar = 2(2/(p-1)+lambda) int (y^2/(1-y^2))^{1-lambda} rho.
inline double cbar_closed(int lambda, double p) {
  const double a = weight_exponent(p);
  const double integral = lambda == 1 ? jacobi_mass(a) : jacobi_mass(a - 1.0) - jacobi_mass(a);
  return 1.0 / (2.0 * (a + lambda) * integral);
}

/// ctilde_0 from 1/ctilde = 4 kappa0^2/(p-1) int rho/(1-y^2).
inline double ctilde_closed(double p) {
  const double k0 = kappa0(p);
  return 1.0 / (4.0 * k0 * k0 / (p - 1.0) * jacobi_mass(weight_exponent(p) - 1.0));
}

inline EigenData W_bar(double d, int lambda, const WeightedGrid& g) {
  check_lorentz(d);
  const double p = g.p();
  const double e = (p + 1.0) / (p - 1.0);
  EigenData out;
  out.d = d;
  out.lambda = lambda;
  out.F = F_bar(d, lambda, g);
  out.c_closed = cbar_closed(lambda, p);
  if (lambda == 1) {
    auto r2 = [&](double y) { return (1.0 - y * y) * std::pow(1.0 + d * y, -e); };
    auto dr2 = [&](double y) {
      return -2.0 * y * std::pow(1.0 + d * y, -e) - e * d * (1.0 - y * y) * std::pow(1.0 + d * y, -e - 1.0);
    };
    out.W = detail::dual_mode(1, r2, dr2, g);
  } else {
    auto r2 = [&](double y) { return (y + d) * std::pow(1.0 + d * y, -e); };
    auto dr2 = [&](double y) { return std::pow(1.0 + d * y, -e) - e * d * (y + d) * std::pow(1.0 + d * y, -e - 1.0); };
    out.W = detail::dual_mode(0, r2, dr2, g);
  }
  detail::normalize_dual(out, g);
  return out;
}

inline EigenData W_tilde(double d, const WeightedGrid& g) {
  check_lorentz(d);
  const double p = g.p();
  EigenData out;
  out.d = d;
  out.lambda = 0;
  out.F = F_tilde(d, g);
  out.c_closed = ctilde_closed(p);
  auto r2 = [&](double y) { return kappa(d, y, p); };
  auto dr2 = [&](double y) { return d_kappa_dy(d, y, p); };
  out.W = detail::dual_mode(0, r2, dr2, g);
  detail::normalize_dual(out, g);
  return out;
}

/// All modes attached to one value of d.
struct SpectralFrame {
  double d = 0.0;
  EigenData bar0, bar1, tilde0;
};

inline SpectralFrame make_spectral_frame(double d, const WeightedGrid& g) {
  return {d, W_bar(d, 0, g), W_bar(d, 1, g), W_tilde(d, g)};
}

inline double project(const EigenData& e, const ScalarPair& r, const WeightedGrid& g) { return phi_pair(e.W, r, g); }

struct BarDecomposition {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  ScalarPair remainder;
};

struct TildeDecomposition {
  double alpha0 = 0.0;
  ScalarPair remainder;
};

inline BarDecomposition decompose_bar(const SpectralFrame& sf, const ScalarPair& r, const WeightedGrid& g) {
  BarDecomposition out;
  out.alpha0 = project(sf.bar0, r, g);
  out.alpha1 = project(sf.bar1, r, g);
  out.remainder = r - out.alpha0 * sf.bar0.F - out.alpha1 * sf.bar1.F;
  return out;
}

inline TildeDecomposition decompose_tilde(const SpectralFrame& sf, const ScalarPair& r, const WeightedGrid& g) {
  TildeDecomposition out;
  out.alpha0 = project(sf.tilde0, r, g);
  out.remainder = r - out.alpha0 * sf.tilde0.F;
  return out;
}

namespace detail {

inline double psi_form(const ScalarField& psi, const ScalarPair& q, const ScalarPair& r, const WeightedGrid& g) {
  const ScalarField dq = g.diff() * q.first;
  const ScalarField dr = g.diff() * r.first;
  const Eigen::ArrayXd w = g.weights().array();
  const Eigen::ArrayXd deg = 1.0 - g.nodes().array().square();
  return (w * (-psi.array() * q.first.array() * r.first.array() + deg * dq.array() * dr.array() +
               q.second.array() * r.second.array()))
      .sum();
}

}  // namespace detail

/// int (-psibar q1 r1 + q1' r1' (1-y^2) + q2 r2) rho.
inline double form_bar(double d, const ScalarPair& q, const ScalarPair& r, const WeightedGrid& g) {
  return detail::psi_form(psi_bar_field(d, g), q, r, g);
}

inline double form_tilde(double d, const ScalarPair& q, const ScalarPair& r, const WeightedGrid& g) {
  return detail::psi_form(psi_tilde_field(d, g), q, r, g);
}

namespace detail {

inline ScalarPair apply_adjoint(const ScalarField& psi, const ScalarPair& r, const WeightedGrid& g) {
  const double p = g.p();
  const ScalarField y = g.nodes();
  ScalarPair out;
  out.first = g.resolvent_solve(g.L_matrix() * r.second + psi.cwiseProduct(r.second));
  const Eigen::ArrayXd inv_deg = 1.0 / (1.0 - y.array().square());
  out.second = -(g.L_matrix() * r.first) + r.first + damping_coefficient(p) * r.second +
               2.0 * y.cwiseProduct(g.diff() * r.second) -
               (8.0 / (p - 1.0)) * (r.second.array() * inv_deg).matrix();
  return out;
}

}  // namespace detail

/// phi-adjoint of Lbar_d at the nodes. The r2/(1-y^2) term is evaluated
/// pointwise, so r2 should vanish at the endpoints for spectral accuracy.
inline ScalarPair apply_Lbar_adjoint(double d, const ScalarPair& r, const WeightedGrid& g) {
  return detail::apply_adjoint(psi_bar_field(d, g), r, g);
}

inline ScalarPair apply_Ltilde_adjoint(double d, const ScalarPair& r, const WeightedGrid& g) {
  return detail::apply_adjoint(psi_tilde_field(d, g), r, g);
}

}  // namespace blowup
