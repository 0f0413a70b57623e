#pragma once

// Stationary solutions kappa(d,y) Omega of the self-similar equation, the
// Lyapunov energy, and the shooting oracle for the profile ODE in the
// xi = artanh(y) variable.

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/params.hpp"
#include "blowup/weighted_space.hpp"

namespace blowup {

inline double kappa0(double p) { return std::pow(linear_coefficient(p), 1.0 / (p - 1.0)); }

inline void check_lorentz(double d) {
  if (!(std::abs(d) < 1.0)) throw std::domain_error("soliton parameter |d| must be < 1, got " + std::to_string(d));
}

/// kappa(d,y) = kappa0 (1-d^2)^{1/(p-1)} / (1+dy)^{2/(p-1)}.
inline double kappa(double d, double y, double p) {
  check_lorentz(d);
  return kappa0(p) * std::pow(1.0 - d * d, 1.0 / (p - 1.0)) / std::pow(1.0 + d * y, 2.0 / (p - 1.0));
}

/// d kappa / d d = -(2 kappa0/(p-1)) (1-d^2)^{1/(p-1)-1} (y+d) / (1+dy)^{(p+1)/(p-1)}.
inline double d_kappa(double d, double y, double p) {
  check_lorentz(d);
  const double a = weight_exponent(p);
  return -a * kappa0(p) * std::pow(1.0 - d * d, 0.5 * a - 1.0) * (y + d) / std::pow(1.0 + d * y, a + 1.0);
}

inline double d_kappa_dy(double d, double y, double p) {
  return -weight_exponent(p) * d * kappa(d, y, p) / (1.0 + d * y);
}

/// kbar(xi) = kappa0 / cosh(xi)^{2/(p-1)}.
inline double kbar(double xi, double p) { return kappa0(p) / std::pow(std::cosh(xi), 2.0 / (p - 1.0)); }

inline double kbar_deriv(double xi, double p) { return -weight_exponent(p) * std::tanh(xi) * kbar(xi, p); }

struct SolitonParams {
  double d = 0.0;
  Eigen::VectorXd omega;

  void validate() const {
    check_lorentz(d);
    if (std::abs(omega.norm() - 1.0) > 1e-12) throw std::domain_error("soliton direction must be a unit vector");
  }
};

inline ScalarField kappa_field(double d, const WeightedGrid& grid) {
  return grid.sample([&](double y) { return kappa(d, y, grid.p()); });
}

inline ScalarField d_kappa_field(double d, const WeightedGrid& grid) {
  return grid.sample([&](double y) { return d_kappa(d, y, grid.p()); });
}

/// Node values of kappa(d,.) Omega.
inline VectorField soliton_field(const SolitonParams& s, const WeightedGrid& grid) {
  s.validate();
  return kappa_field(s.d, grid) * s.omega.transpose();
}

/// The state (kappa(d,.) Omega, 0).
inline HState soliton_state(const SolitonParams& s, const WeightedGrid& grid) {
  const VectorField w = soliton_field(s, grid);
  return {w, VectorField::Zero(w.rows(), w.cols())};
}

inline Eigen::VectorXd unit_vector(int m, int k) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  e(k) = 1.0;
  return e;
}

/// Values of a field in the variables xi = artanh(y), wbar = w (1-y^2)^{1/(p-1)}.
struct XiProfile {
  Eigen::VectorXd xi;
  VectorField values;
};

inline XiProfile xi_transform(const VectorField& w, const Eigen::VectorXd& y, double p) {
  XiProfile out{Eigen::VectorXd(y.size()), VectorField(w.rows(), w.cols())};
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(std::abs(y(i)) < 1.0)) throw std::domain_error("xi_transform: node outside (-1,1)");
    out.xi(i) = std::atanh(y(i));
    out.values.row(i) = w.row(i) * std::pow((1.0 - y(i)) * (1.0 + y(i)), 1.0 / (p - 1.0));
  }
  return out;
}

inline XiProfile xi_transform(const VectorField& w, const WeightedGrid& grid) {
  return xi_transform(w, grid.nodes(), grid.p());
}

/// Inverse of xi_transform; returns node values w(y) with y = tanh(xi).
inline VectorField xi_inverse(const XiProfile& prof, double p) {
  VectorField w(prof.values.rows(), prof.values.cols());
  for (Eigen::Index i = 0; i < prof.xi.size(); ++i) {
    const double c = std::cosh(prof.xi(i));
    // (1 - tanh^2)^{-1/(p-1)} = cosh^{2/(p-1)}
    w.row(i) = prof.values.row(i) * std::pow(c, 2.0 / (p - 1.0));
  }
  return w;
}

/// Pointwise |w|^{p-1} w for rows of a vector field.
inline VectorField power_nonlinearity(const VectorField& w, double p) {
  VectorField out(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double r = w.row(i).norm();
    out.row(i) = (r > 0.0 ? std::pow(r, p - 1.0) : 0.0) * w.row(i);
  }
  return out;
}

/// L w - 2(p+1)/(p-1)^2 w + |w|^{p-1} w at the nodes.
inline VectorField stationary_residual(const VectorField& w, const WeightedGrid& grid) {
  const double p = grid.p();
  return grid.L_matrix() * w - linear_coefficient(p) * w + power_nonlinearity(w, p);
}

/// Lyapunov functional of the self-similar equation evaluated on (w, ws).
inline double energy(const HState& q, const WeightedGrid& grid) {
  const double p = grid.p();
  const Eigen::ArrayXd w = grid.weights().array();
  const Eigen::ArrayXd deg = 1.0 - grid.nodes().array().square();
  const Eigen::MatrixXd dq = grid.diff() * q.q1;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < q.q1.cols(); ++j) {
    acc += 0.5 * (w * q.q2.col(j).array().square()).sum();
    acc += 0.5 * (w * deg * dq.col(j).array().square()).sum();
    acc += 0.5 * linear_coefficient(p) * (w * q.q1.col(j).array().square()).sum();
  }
  Eigen::ArrayXd pot(q.q1.rows());
  for (Eigen::Index i = 0; i < q.q1.rows(); ++i) pot(i) = std::pow(q.q1.row(i).norm(), p + 1.0) / (p + 1.0);
  return acc - (w * pot).sum();
}

/// E(kappa0, 0) = kappa0^2/(p-1) int rho dy.
inline double soliton_energy(double p) {
  return kappa0(p) * kappa0(p) / (p - 1.0) * jacobi_mass(weight_exponent(p));
}

// ---------------------------------------------------------------------------
// Shooting oracle for the modulus equation rho'' - mu/rho^3 - c0 rho + rho^p = 0.

struct OdeState {
  double rho_val = 0.0;
  double rho_deriv = 0.0;
  double h_val = 0.0;  // |Omega'|^2 = mu / rho^4
  double mu = 0.0;
};

struct OdeSample {
  double xi;
  OdeState state;
  double first_integral;
};

struct OdeTrajectory {
  std::vector<OdeSample> samples;
  double min_rho = 0.0;
  double max_first_integral_drift = 0.0;
};

/// c0 = 4/(p-1)^2.
inline double profile_c0(double p) { return 4.0 / ((p - 1.0) * (p - 1.0)); }

inline double profile_first_integral(double r, double dr, double mu, double p) {
  const double c0 = profile_c0(p);
  return 0.5 * dr * dr + (mu > 0.0 ? 0.5 * mu / (r * r) : 0.0) - 0.5 * c0 * r * r + std::pow(r, p + 1.0) / (p + 1.0);
}

struct OdeOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double output_step = 0.01;
};

/// Integrate the modulus equation from xi = 0 to xi_max (either sign).
inline OdeTrajectory classify_ode_integrate(const OdeState& initial, double xi_max, double p,
                                            const OdeOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  if (!(initial.rho_val > 0.0)) throw std::invalid_argument("classify_ode_integrate: rho must be positive");
  if (initial.mu < 0.0) throw std::invalid_argument("classify_ode_integrate: mu must be nonnegative");
  const double mu = initial.mu;
  const double c0 = profile_c0(p);
  using State = std::array<double, 2>;

  auto rhs = [&](const State& x, State& dx, double) {
    const double r = x[0];
    dx[0] = x[1];
    dx[1] = (mu > 0.0 ? mu / (r * r * r) : 0.0) + c0 * r - std::pow(std::abs(r), p - 1.0) * r;
  };

  const double e0 = profile_first_integral(initial.rho_val, initial.rho_deriv, mu, p);
  OdeTrajectory traj;
  traj.min_rho = initial.rho_val;
  auto observe = [&](const State& x, double xi) {
    if (!(x[0] > 0.0) || !std::isfinite(x[0])) {
      throw NumericalFailure("classify_ode_integrate: modulus reached zero at xi=" + std::to_string(xi));
    }
    const double e = profile_first_integral(x[0], x[1], mu, p);
    const double h = mu / std::pow(x[0], 4);
    traj.samples.push_back({xi, {x[0], x[1], h, mu}, e});
    traj.min_rho = std::min(traj.min_rho, x[0]);
    traj.max_first_integral_drift = std::max(traj.max_first_integral_drift, std::abs(e - e0));
  };

  State x{initial.rho_val, initial.rho_deriv};
  const double step = xi_max >= 0.0 ? opt.output_step : -opt.output_step;
  auto stepper = odeint::make_controlled(opt.abs_tol, opt.rel_tol, odeint::runge_kutta_fehlberg78<State>());
  odeint::integrate_const(stepper, rhs, x, 0.0, xi_max, step, observe);
  return traj;
}

/// Full R^m profile equation wbar'' = c0 wbar - |wbar|^{p-1} wbar, used to
/// cross-check the modulus reduction. Returns (xi, wbar, wbar') samples.
struct VectorProfileSample {
  double xi;
  Eigen::VectorXd value;
  Eigen::VectorXd deriv;
};

inline std::vector<VectorProfileSample> integrate_vector_profile(const Eigen::VectorXd& w0, const Eigen::VectorXd& dw0,
                                                                 double xi_max, double p,
                                                                 const OdeOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  const Eigen::Index m = w0.size();
  const double c0 = profile_c0(p);
  using State = std::vector<double>;
  auto rhs = [&](const State& x, State& dx, double) {
    double r2 = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) r2 += x[k] * x[k];
    const double f = std::pow(std::sqrt(r2), p - 1.0);
    for (Eigen::Index k = 0; k < m; ++k) {
      dx[k] = x[m + k];
      dx[m + k] = c0 * x[k] - f * x[k];
    }
  };
  State x(2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    x[k] = w0(k);
    x[m + k] = dw0(k);
  }
  std::vector<VectorProfileSample> out;
  auto observe = [&](const State& s, double xi) {
    VectorProfileSample smp{xi, Eigen::VectorXd(m), Eigen::VectorXd(m)};
    for (Eigen::Index k = 0; k < m; ++k) {
      smp.value(k) = s[k];
      smp.deriv(k) = s[m + k];
    }
    out.push_back(std::move(smp));
  };
  const double step = xi_max >= 0.0 ? opt.output_step : -opt.output_step;
  auto stepper = odeint::make_controlled(opt.abs_tol, opt.rel_tol, odeint::runge_kutta_fehlberg78<State>());
  odeint::integrate_const(stepper, rhs, x, 0.0, xi_max, step, observe);
  return out;
}

/// mu = |wbar|^2 |wbar'|^2 - (wbar . wbar')^2 = rho^4 |Omega'|^2.
inline double angular_invariant(const Eigen::VectorXd& w, const Eigen::VectorXd& dw) {
  const double dot = w.dot(dw);
  return std::max(0.0, w.squaredNorm() * dw.squaredNorm() - dot * dot);
}

// ---------------------------------------------------------------------------
// Distance to the set of non-zero stationary solutions.

struct ManifoldDistance {
  double distance = 0.0;
  SolitonParams best;
};

namespace detail {

inline double unweighted_h1_inner(const ScalarField& f, const ScalarField& g, const WeightedGrid& grid) {
  return grid.unweighted_inner(f, g) + grid.unweighted_inner(grid.diff() * f, grid.diff() * g);
}

}  // namespace detail

/// Upper bound on inf_{d, Omega} ||w - kappa(d)Omega||_{H1(-1,1)} + ||ws||_{L2(-1,1)}.
/// For fixed d the optimal Omega is explicit; the remaining 1-D problem in
/// lambda = artanh d is scanned on [-3,3] and refined by root finding on the
/// derivative.
inline ManifoldDistance project_to_manifold_distance(const HState& q, const WeightedGrid& grid) {
  const int m = static_cast<int>(q.q1.cols());
  const double p = grid.p();

  auto projections = [&](double lam, Eigen::VectorXd& v, Eigen::VectorXd* dv, double& kk, double* dkk) {
    const double d = std::tanh(lam);
    const ScalarField k = kappa_field(d, grid);
    v.resize(m);
    for (int j = 0; j < m; ++j) v(j) = detail::unweighted_h1_inner(q.q1.col(j), k, grid);
    kk = detail::unweighted_h1_inner(k, k, grid);
    if (dv != nullptr) {
      const ScalarField dk = (1.0 - d * d) * d_kappa_field(d, grid);
      dv->resize(m);
      for (int j = 0; j < m; ++j) (*dv)(j) = detail::unweighted_h1_inner(q.q1.col(j), dk, grid);
      *dkk = 2.0 * detail::unweighted_h1_inner(k, dk, grid);
    }
  };
  // dist^2(lam) = |w|^2 - 2|v(lam)| + |kappa_lam|^2
  auto objective = [&](double lam) {
    Eigen::VectorXd v;
    double kk = 0.0;
    projections(lam, v, nullptr, kk, nullptr);
    return kk - 2.0 * v.norm();
  };
  auto slope = [&](double lam) {
    Eigen::VectorXd v, dv;
    double kk = 0.0, dkk = 0.0;
    projections(lam, v, &dv, kk, &dkk);
    const double vn = v.norm();
    return dkk - (vn > 0.0 ? 2.0 * v.dot(dv) / vn : 0.0);
  };

  const double h = 0.05;
  double best_lam = -3.0;
  double best_val = objective(best_lam);
  for (double lam = -3.0 + h; lam <= 3.0 + 1e-12; lam += h) {
    const double val = objective(lam);
    if (val < best_val) {
      best_val = val;
      best_lam = lam;
    }
  }
  double lo = std::max(-3.0, best_lam - h), hi = std::min(3.0, best_lam + h);
  const double slo = slope(lo), shi = slope(hi);
  if (slo < 0.0 && shi > 0.0) {
    boost::math::tools::eps_tolerance<double> tol(50);
    boost::uintmax_t iters = 100;
    const auto root = boost::math::tools::toms748_solve(slope, lo, hi, slo, shi, tol, iters);
    best_lam = 0.5 * (root.first + root.second);
  }

  const double d = std::tanh(best_lam);
  Eigen::VectorXd v;
  double kk = 0.0;
  projections(best_lam, v, nullptr, kk, nullptr);
  Eigen::VectorXd omega = v.norm() > 0.0 ? Eigen::VectorXd(v / v.norm()) : unit_vector(m, 0);

  ManifoldDistance out;
  out.best = {d, omega};
  const VectorField diff = q.q1 - kappa_field(d, grid) * omega.transpose();
  out.distance = h1_unweighted_norm(diff, grid) + l2_unweighted_norm(q.q2, grid);
  return out;
}

}  // namespace blowup
