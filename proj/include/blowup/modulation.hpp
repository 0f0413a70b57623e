#pragma once

// Modulation of a state near the soliton family: the frame (d, theta) is
// chosen so that the remainder q = R_theta^{-1} v - (kappa(d)e1, 0) has no
// component along the null modes. Also the coefficient bookkeeping along
// trajectories and the trapping experiment.

#include <Eigen/Dense>
#include <boost/math/special_functions/binomial.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/evolution.hpp"
#include "blowup/params.hpp"
#include "blowup/rotations.hpp"
#include "blowup/solitons.hpp"
#include "blowup/spectral.hpp"
#include "blowup/weighted_space.hpp"

namespace blowup {

struct SolitonFrame {
  double d = 0.0;
  Angles theta;

  double lambda() const { return std::atanh(d); }
  bool in_regime() const { return (theta.array().cos() >= 0.5).all(); }
};

inline SolitonFrame identity_frame(int m, double d = 0.0) { return {d, Angles::Zero(m - 1)}; }

/// Rows of a node-by-component field are points of R^m; x -> R x acts on rows
/// as X R^T.
inline VectorField rotate(const VectorField& f, const SquareMatrix& R) { return f * R.transpose(); }

inline HState rotate(const HState& q, const SquareMatrix& R) { return {rotate(q.q1, R), rotate(q.q2, R)}; }

/// R_theta [(kappa(d)e1, 0) + q].
inline HState assemble(const SolitonFrame& f, const HState& q, const WeightedGrid& g) {
  HState base = q;
  base.q1.col(0) += kappa_field(f.d, g);
  return rotate(base, compose_R(f.theta));
}

/// R_theta^{-1} v - (kappa(d)e1, 0).
inline HState remainder(const HState& v, const SolitonFrame& f, const WeightedGrid& g) {
  HState q = rotate(v, compose_R(f.theta).transpose());
  q.q1.col(0) -= kappa_field(f.d, g);
  return q;
}

/// Dual null modes for one value of d.
struct NullModes {
  EigenData bar0;
  EigenData tilde0;
};

inline NullModes null_modes(double d, const WeightedGrid& g) { return {W_bar(d, 0, g), W_tilde(d, g)}; }

inline Eigen::VectorXd Phi(const HState& v, const SolitonFrame& f, const NullModes& modes, const WeightedGrid& g) {
  const HState q = remainder(v, f, g);
  const int m = q.components();
  Eigen::VectorXd out(m);
  out(0) = phi_pair(coordinate(q, 0), modes.bar0.W, g);
  for (int j = 1; j < m; ++j) out(j) = phi_pair(coordinate(q, j), modes.tilde0.W, g);
  return out;
}

/// Phi(v, d, theta): phi-pairings of the remainder with Wbar_0^d (coordinate 1)
/// and Wtilde_0^d (coordinates 2..m).
inline Eigen::VectorXd Phi(const HState& v, const SolitonFrame& f, const WeightedGrid& g) {
  return Phi(v, f, null_modes(f.d, g), g);
}

/// Central-difference Jacobian of Phi in (d, theta_2..theta_m).
inline Eigen::MatrixXd Phi_jacobian(const HState& v, const SolitonFrame& f, const WeightedGrid& g,
                                    double h = 1e-6) {
  const int m = v.components();
  Eigen::MatrixXd J(m, m);
  for (int k = 0; k < m; ++k) {
    SolitonFrame fp = f, fm = f;
    if (k == 0) {
      fp.d += h;
      fm.d -= h;
    } else {
      fp.theta(k - 1) += h;
      fm.theta(k - 1) -= h;
    }
    J.col(k) = (Phi(v, fp, g) - Phi(v, fm, g)) / (2.0 * h);
  }
  return J;
}

/// Leading-order Jacobian at an exact soliton: dPhibar/dd = 2 kappa0/((p-1)(1-d^2)),
/// dPhitilde_i/dtheta_i = -prod_{k>i} cos theta_k.
inline Eigen::MatrixXd Phi_jacobian_leading(const SolitonFrame& f, double p) {
  const int m = static_cast<int>(f.theta.size()) + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  J(0, 0) = 2.0 * kappa0(p) / ((p - 1.0) * (1.0 - f.d * f.d));
  for (int i = 2; i <= m; ++i) J(i - 1, i - 1) = -cos_product(f.theta, i + 1, m);
  return J;
}

struct ModulationOptions {
  double tol = 1e-11;
  int max_iter = 50;
  double fd_step = 1e-6;
};

struct ModulatedState {
  SolitonFrame frame;
  HState q;
  double alpha_1_1 = 0.0;
  /// alpha_{-,1}, ..., alpha_{-,m}
  Eigen::VectorXd alpha_minus;
  Eigen::VectorXd phi_residual;
  int iterations = 0;
  bool regime_ok = true;
};

/// Newton solve of Phi(v, d, theta) = 0 from the guess frame.
inline ModulatedState modulate(const HState& v, const SolitonFrame& guess, const WeightedGrid& g,
                               const ModulationOptions& opt = {}) {
  check_lorentz(guess.d);
  const int m = v.components();
  if (guess.theta.size() != m - 1) throw std::invalid_argument("modulate: frame has wrong number of angles");
  SolitonFrame f = guess;
  Eigen::VectorXd r = Phi(v, f, g);
  double rn = r.lpNorm<Eigen::Infinity>();
  int it = 0;
  int polish = 0;
  // The first step uses the leading-order diagonal Jacobian, later steps the
  // finite-difference one.
  bool leading = true;
  for (; it < opt.max_iter; ++it) {
    if (rn <= opt.tol) {
      if (polish++ >= 2) break;
    }
    Eigen::MatrixXd J = leading ? Phi_jacobian_leading(f, g.p()) : Phi_jacobian(v, f, g, opt.fd_step);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      J = Phi_jacobian_leading(f, g.p());
      lu.compute(J);
    }
    const Eigen::VectorXd step = lu.solve(-r);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      SolitonFrame trial = f;
      trial.d = f.d + t * step(0);
      if (!(std::abs(trial.d) < 1.0 - 1e-12)) continue;
      trial.theta = f.theta + t * step.tail(m - 1);
      const Eigen::VectorXd rt = Phi(v, trial, g);
      const double rtn = rt.lpNorm<Eigen::Infinity>();
      if (rtn < rn || (rn <= opt.tol && rtn <= rn * 1.0000001)) {
        f = trial;
        r = rt;
        rn = rtn;
        accepted = true;
        break;
      }
    }
    if (!accepted && !leading) break;
    leading = false;
  }
  if (!(rn <= opt.tol)) {
    throw NumericalFailure("modulate: Newton did not converge, |Phi| = " + std::to_string(rn));
  }
  ModulatedState out;
  out.frame = f;
  out.q = remainder(v, f, g);
  out.phi_residual = r;
  out.iterations = it;
  out.regime_ok = f.in_regime();
  return out;
}

/// Coefficients alpha_{1,1} and alpha_{-,j} of a modulated remainder.
inline ModulatedState extract_alphas(ModulatedState ms, const SpectralFrame& sf, const WeightedGrid& g) {
  const int m = ms.q.components();
  ms.alpha_minus = Eigen::VectorXd::Zero(m);
  auto root = [](double v, double scale, const char* what) {
    if (v < -1e-10 * std::max(scale, 1e-300)) {
      throw NumericalFailure(std::string("extract_alphas: negative quadratic form on ") + what);
    }
    return std::sqrt(std::max(0.0, v));
  };
  const BarDecomposition bd = decompose_bar(sf, coordinate(ms.q, 0), g);
  ms.alpha_1_1 = bd.alpha1;
  ms.alpha_minus(0) =
      root(form_bar(sf.d, bd.remainder, bd.remainder, g), phi_pair(bd.remainder, bd.remainder, g), "bar remainder");
  for (int j = 1; j < m; ++j) {
    const TildeDecomposition td = decompose_tilde(sf, coordinate(ms.q, j), g);
    ms.alpha_minus(j) = root(form_tilde(sf.d, td.remainder, td.remainder, g),
                             phi_pair(td.remainder, td.remainder, g), "tilde remainder");
  }
  return ms;
}

inline ModulatedState extract_alphas(ModulatedState ms, const WeightedGrid& g) {
  return extract_alphas(std::move(ms), make_spectral_frame(ms.frame.d, g), g);
}

namespace detail {

// (1+x)^g - 1 - g x - g(g-1)x^2/2 for x >= -1, binomial series for |x| < 1/2.
inline double cubic_tail(double x, double gam) {
  if (std::abs(x) < 0.5) {
    double term = gam * (gam - 1.0) * (gam - 2.0) / 6.0 * x * x * x;
    double acc = 0.0;
    for (int k = 3; k < 200 && term != 0.0; ++k) {
      acc += term;
      if (std::abs(term) <= 1e-18 * std::abs(acc)) break;
      term *= (gam - k) / (k + 1.0) * x;
    }
    return acc;
  }
  return std::pow(1.0 + x, gam) - 1.0 - gam * x - 0.5 * gam * (gam - 1.0) * x * x;
}

}  // namespace detail

/// Pointwise higher-order part of the potential energy around kappa(d)e1:
/// |k e1 + q|^{p+1}/(p+1) - k^{p+1}/(p+1) - k^p q_1 - (p/2) k^{p-1} q_1^2
/// - (k^{p-1}/2) sum_{j>=2} q_j^2, evaluated without cancellation.
inline ScalarField potential_remainder(const VectorField& q1, double d, const WeightedGrid& g) {
  const double p = g.p();
  const double gam = 0.5 * (p + 1.0);
  const ScalarField k = kappa_field(d, g);
  ScalarField out(q1.rows());
  for (Eigen::Index i = 0; i < q1.rows(); ++i) {
    const double q11 = q1(i, 0);
    const double qq = q1.row(i).squaredNorm();
    const double ki = k(i);
    const double x = (2.0 * ki * q11 + qq) / (ki * ki);
    out(i) = 0.125 * (p - 1.0) * std::pow(ki, p - 3.0) * (4.0 * ki * q11 * qq + qq * qq) +
             std::pow(ki, p + 1.0) / (p + 1.0) * detail::cubic_tail(x, gam);
  }
  return out;
}

/// R_-(q1) = -int F_d(q1) rho dy.
inline double R_minus(const VectorField& q1, double d, const WeightedGrid& g) {
  return -integrate_rho(potential_remainder(q1, d, g), g);
}

/// One row of the monitor series.
struct MonitorRecord {
  double s = 0.0;
  double E = 0.0;
  double q_norm = 0.0;
  double d = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd theta;
  double alpha_1_1 = 0.0;
  Eigen::VectorXd alpha_minus;
  double a = 0.0;
  double b = 0.0;
  double R_minus = 0.0;
  /// |pibar_0(q coordinate 1)| + sum_j |pitilde_0(q coordinate j)|.
  double orthogonality = 0.0;
  /// int (q_{-,2,1}^2 + sum_j q_{-,2,j}^2) rho/(1-y^2).
  double dissipation = 0.0;
};

using MonitorSeries = std::vector<MonitorRecord>;

inline MonitorRecord make_record(double s, const HState& v, const ModulatedState& ms, const SpectralFrame& sf,
                                 const WeightedGrid& g) {
  MonitorRecord r;
  r.s = s;
  r.E = energy(v, g);
  r.q_norm = h_norm(ms.q, g);
  r.d = ms.frame.d;
  r.lambda = ms.frame.lambda();
  r.theta = ms.frame.theta;
  r.alpha_1_1 = ms.alpha_1_1;
  r.alpha_minus = ms.alpha_minus;
  r.a = ms.alpha_1_1 * ms.alpha_1_1;
  r.R_minus = R_minus(ms.q.q1, ms.frame.d, g);
  r.b = ms.alpha_minus.squaredNorm() + r.R_minus;
  const int m = ms.q.components();
  const BarDecomposition bd = decompose_bar(sf, coordinate(ms.q, 0), g);
  r.orthogonality = std::abs(bd.alpha0);
  r.dissipation = g.singular_inner(bd.remainder.second, bd.remainder.second);
  for (int j = 1; j < m; ++j) {
    const TildeDecomposition td = decompose_tilde(sf, coordinate(ms.q, j), g);
    r.orthogonality += std::abs(td.alpha0);
    r.dissipation += g.singular_inner(td.remainder.second, td.remainder.second);
  }
  return r;
}

/// Ratios that should stay bounded along a trapped trajectory.
struct DynamicsDiagnostics {
  std::vector<double> s;
  std::vector<double> theta_ratio;   // sum |theta_i'| / ||q||^2
  std::vector<double> lambda_ratio;  // |lambda'| / ||q||^2
  std::vector<double> alpha_ratio;   // |alpha_11' - alpha_11| / ||q||^2
  std::vector<double> R_ratio;       // |R_-| / ||q||^{1+min(p,2)}
  std::vector<double> barrier_ratio; // alpha_11 / (alpha_-,1 + sum alpha_-,j)
  std::vector<bool> sandwich_ok;     // b within the 1% envelope
  double max_theta_ratio = 0.0, max_lambda_ratio = 0.0, max_alpha_ratio = 0.0, max_R_ratio = 0.0;
  double max_barrier_ratio = 0.0;
  /// max over the run divided by max over the initial window, per ratio.
  double theta_drift = 0.0, lambda_drift = 0.0, alpha_drift = 0.0, R_drift = 0.0;
  bool sandwich_all = true;
  std::size_t gated_samples = 0;
};

/// Centered differences on the sample ladder; ratios are evaluated only where
/// ||q||_H >= noise_floor, since below it the numerators are dominated by
/// solver tolerances.
inline DynamicsDiagnostics monitor_dynamics(const MonitorSeries& series, double p, double noise_floor = 1e-4,
                                            double initial_window = 2.0) {
  DynamicsDiagnostics out;
  if (series.size() < 3) return out;
  const double pbar = std::min(p, 2.0);
  double init_theta = 0, init_lambda = 0, init_alpha = 0, init_R = 0;
  const double s0 = series.front().s;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const MonitorRecord& r = series[k];
    const double lo = 0.99 * r.alpha_minus.squaredNorm() - 0.01 * r.a;
    const double hi = 1.01 * r.alpha_minus.squaredNorm() + 0.01 * r.a;
    const bool ok = r.b >= lo && r.b <= hi;
    out.sandwich_ok.push_back(ok);
    out.sandwich_all = out.sandwich_all && ok;
    if (k == 0 || k + 1 == series.size()) continue;
    if (r.q_norm < noise_floor) continue;
    const MonitorRecord& a = series[k - 1];
    const MonitorRecord& b = series[k + 1];
    const double ds = b.s - a.s;
    const double q2 = r.q_norm * r.q_norm;
    const double th = ((b.theta - a.theta) / ds).cwiseAbs().sum() / q2;
    const double la = std::abs((b.lambda - a.lambda) / ds) / q2;
    const double al = std::abs((b.alpha_1_1 - a.alpha_1_1) / ds - r.alpha_1_1) / q2;
    const double rr = std::abs(r.R_minus) / std::pow(r.q_norm, 1.0 + pbar);
    const double denom = r.alpha_minus.sum() + 1e-300;
    const double br = r.alpha_1_1 / denom;
    out.s.push_back(r.s);
    out.theta_ratio.push_back(th);
    out.lambda_ratio.push_back(la);
    out.alpha_ratio.push_back(al);
    out.R_ratio.push_back(rr);
    out.barrier_ratio.push_back(br);
    out.max_theta_ratio = std::max(out.max_theta_ratio, th);
    out.max_lambda_ratio = std::max(out.max_lambda_ratio, la);
    out.max_alpha_ratio = std::max(out.max_alpha_ratio, al);
    out.max_R_ratio = std::max(out.max_R_ratio, rr);
    out.max_barrier_ratio = std::max(out.max_barrier_ratio, br);
    if (r.s - s0 <= initial_window) {
      init_theta = std::max(init_theta, th);
      init_lambda = std::max(init_lambda, la);
      init_alpha = std::max(init_alpha, al);
      init_R = std::max(init_R, rr);
    }
  }
  out.gated_samples = out.s.size();
  auto drift = [](double all, double init) { return init > 0.0 ? all / init : (all > 0.0 ? INFINITY : 1.0); };
  out.theta_drift = drift(out.max_theta_ratio, init_theta);
  out.lambda_drift = drift(out.max_lambda_ratio, init_lambda);
  out.alpha_drift = drift(out.max_alpha_ratio, init_alpha);
  out.R_drift = drift(out.max_R_ratio, init_R);
  return out;
}

// ---------------------------------------------------------------------------
// Trapping experiment

/// Smooth random scalar pair sum_k c_k P_k(y) with Legendre polynomials of
/// degree < terms and coefficients ~ N(0, 1)/(1+k); depends only on the seed,
/// not on the grid.
inline ScalarPair random_smooth_pair(std::mt19937_64& rng, const WeightedGrid& g, int terms = 8) {
  std::normal_distribution<double> nd(0.0, 1.0);
  auto series = [&](std::vector<double> c) {
    return g.sample([c](double y) {
      double p0 = 1.0, p1 = y, acc = c[0];
      if (c.size() > 1) acc += c[1] * y;
      for (std::size_t k = 2; k < c.size(); ++k) {
        const double p2 = ((2.0 * k - 1.0) * y * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        acc += c[k] * p2;
        p0 = p1;
        p1 = p2;
      }
      return acc;
    });
  };
  std::vector<double> c1(terms), c2(terms);
  for (int k = 0; k < terms; ++k) c1[k] = nd(rng) / (1.0 + k);
  for (int k = 0; k < terms; ++k) c2[k] = nd(rng) / (1.0 + k);
  return {series(c1), series(c2)};
}

/// Random perturbation with no component on the nonnegative modes, scaled to
/// ||q||_H = eps.
inline HState random_remainder_perturbation(std::mt19937_64& rng, double d, double eps, const WeightedGrid& g) {
  const SpectralFrame sf = make_spectral_frame(d, g);
  const int m = g.m();
  HState q = HState::zero(g.size(), m);
  set_coordinate(q, 0, decompose_bar(sf, random_smooth_pair(rng, g), g).remainder);
  for (int j = 1; j < m; ++j) set_coordinate(q, j, decompose_tilde(sf, random_smooth_pair(rng, g), g).remainder);
  const double n = h_norm(q, g);
  return n > 0.0 ? (eps / n) * q : q;
}

/// Random perturbation with generic components, scaled to ||q||_H = eps.
inline HState random_perturbation(std::mt19937_64& rng, double eps, const WeightedGrid& g) {
  const int m = g.m();
  HState q = HState::zero(g.size(), m);
  for (int j = 0; j < m; ++j) set_coordinate(q, j, random_smooth_pair(rng, g));
  const double n = h_norm(q, g);
  return n > 0.0 ? (eps / n) * q : q;
}

struct TrappingOptions {
  double s_len = 20.0;
  double dt = 0.0;
  double remodulate_every = 0.1;
  /// Adjust the F_bar_1 coefficient of the initial data so the unstable mode
  /// stays small over the run.
  bool shoot = true;
  std::vector<double> shooting_horizons = {5.0, 10.0, 15.0};
  /// Escape when ||q||_H exceeds escape_ratio * max(eps_star, ||q(s*)||).
  double escape_ratio = 10.0;
  /// Extra F_bar_1 coefficient added to the initial data.
  double alpha_kick = 0.0;
  double noise_floor = 1e-4;
  /// Decay is measured over windows of this length.
  double decay_window = 10.0;
};

struct TrappingResult {
  MonitorSeries series;
  std::string verdict;  // "trapped", "escaped", "undecided"
  std::string exit_cause;
  double beta = 0.0;  // F_bar_1 coefficient chosen by shooting
  /// Least-squares slope of log||q||_H over the best decay window; mu_hat = -slope.
  double slope = std::numeric_limits<double>::quiet_NaN();
  double mu_hat = std::numeric_limits<double>::quiet_NaN();
  double best_decay_factor = 1.0;
  SolitonFrame final_frame;
  double displacement = 0.0;  // |lambda_end - lambda*| + |theta_end - theta*|
  double max_orthogonality = 0.0;
  double min_energy_gap = std::numeric_limits<double>::infinity();  // min E(s) - E(kappa0,0)
  bool energy_condition = true;
};

namespace detail {

inline HState trapping_initial(const SolitonFrame& star, const HState& pert, double beta, const WeightedGrid& g) {
  HState q = pert;
  if (beta != 0.0) {
    const ScalarPair f1 = F_bar(star.d, 1, g);
    q.q1.col(0) += beta * f1.first;
    q.q2.col(0) += beta * f1.second;
  }
  return assemble(star, q, g);
}

// alpha_{1,1} after evolving for `horizon` from the shot initial data.
inline double unstable_coefficient_after(const SolitonFrame& star, const HState& pert, double beta, double horizon,
                                         double dt, const WeightedGrid& g) {
  SelfSimState st;
  const HState v0 = trapping_initial(star, pert, beta, g);
  st.w = v0.q1;
  st.ws = v0.q2;
  SelfSimOptions so;
  so.dt = dt;
  so.record_every = horizon;
  const SelfSimTrajectory tr = simulate_selfsim(st, horizon, g, so);
  const HState v = tr.states.back().as_h();
  const ModulatedState ms = modulate(v, star, g);
  const SpectralFrame sf = make_spectral_frame(ms.frame.d, g);
  return project(sf.bar1, coordinate(ms.q, 0), g);
}

}  // namespace detail

/// Secant iteration on the F_bar_1 coefficient over progressively longer
/// horizons so that alpha_{1,1} stays small: the discrete counterpart of
/// selecting data on the stable manifold of the soliton.
inline double shoot_unstable_mode(const SolitonFrame& star, const HState& pert, const std::vector<double>& horizons,
                                  double dt, const WeightedGrid& g) {
  double beta = 0.0;
  for (double h : horizons) {
    double b0 = beta, b1 = beta + 1e-3 * std::max(h_norm(pert, g), 1e-12) * std::exp(-h);
    double f0 = detail::unstable_coefficient_after(star, pert, b0, h, dt, g);
    double f1 = detail::unstable_coefficient_after(star, pert, b1, h, dt, g);
    for (int it = 0; it < 8; ++it) {
      if (f1 == f0) break;
      const double b2 = b1 - f1 * (b1 - b0) / (f1 - f0);
      b0 = b1;
      f0 = f1;
      b1 = b2;
      f1 = detail::unstable_coefficient_after(star, pert, b1, h, dt, g);
      if (std::abs(f1) < 1e-14 || std::abs(b1 - b0) < 1e-15 * std::max(1e-300, std::abs(b1))) break;
    }
    beta = b1;
  }
  return beta;
}

/// Evolve R_theta*[(kappa(d*)e1,0) + perturbation], re-modulating on a fixed
/// cadence, and classify the outcome.
inline TrappingResult trapping_experiment(const SolitonFrame& star, const HState& perturbation,
                                          const WeightedGrid& g, const TrappingOptions& opt = {}) {
  TrappingResult res;
  const double dt = opt.dt > 0.0 ? opt.dt : selfsim_stable_dt(g);
  const double eps_star = h_norm(perturbation, g);
  if (opt.shoot && eps_star > 0.0) res.beta = shoot_unstable_mode(star, perturbation, opt.shooting_horizons, dt, g);
  res.beta += opt.alpha_kick;
  const HState v0 = detail::trapping_initial(star, perturbation, res.beta, g);
  const double E0 = soliton_energy(g.p());

  SelfSimState st{v0.q1, v0.q2, 0.0};
  SolitonFrame frame = star;
  bool stop = false;
  double q_scale = 0.0;
  auto on_record = [&](const SelfSimState& s) {
    if (stop) return;
    const HState v = s.as_h();
    ModulatedState ms;
    try {
      ms = modulate(v, frame, g);
    } catch (const NumericalFailure& e) {
      res.verdict = "escaped";
      res.exit_cause = std::string("modulation failed: ") + e.what();
      stop = true;
      return;
    }
    frame = ms.frame;
    const SpectralFrame sf = make_spectral_frame(frame.d, g);
    ms = extract_alphas(std::move(ms), sf, g);
    MonitorRecord r = make_record(s.s, v, ms, sf, g);
    res.max_orthogonality = std::max(res.max_orthogonality, r.orthogonality);
    res.min_energy_gap = std::min(res.min_energy_gap, r.E - E0);
    if (res.series.empty()) q_scale = std::max(eps_star, r.q_norm);
    res.series.push_back(r);
    if (!ms.regime_ok) {
      res.verdict = "escaped";
      res.exit_cause = "cos(theta_i) < 1/2";
      stop = true;
    } else if (r.q_norm > opt.escape_ratio * q_scale && q_scale > 0.0) {
      res.verdict = "escaped";
      res.exit_cause = "||q||_H exceeded escape_ratio * initial size";
      stop = true;
    }
  };

  // Integrate in chunks so an escape stops the run early.
  SelfSimOptions so;
  so.dt = dt;
  so.record_every = opt.remodulate_every;
  const double chunk = 1.0;
  double s_done = 0.0;
  bool first = true;
  while (s_done < opt.s_len - 1e-12 && !stop) {
    const double len = std::min(chunk, opt.s_len - s_done);
    SelfSimTrajectory tr;
    try {
      tr = simulate_selfsim(st, len, g, so, [&](const SelfSimState& s) {
        if (!first && s.s == st.s) return;  // chunk start already recorded
        first = false;
        on_record(s);
      });
    } catch (const NumericalFailure& e) {
      res.verdict = "escaped";
      res.exit_cause = e.what();
      break;
    }
    st = tr.states.back();
    s_done += len;
  }
  res.energy_condition = res.min_energy_gap >= -1e-10;
  if (res.series.empty()) return res;

  res.final_frame = frame;
  res.displacement =
      std::abs(frame.lambda() - star.lambda()) + (frame.theta - star.theta).cwiseAbs().sum();

  // Decay: the window of length decay_window with the largest drop of
  // ||q||_H, and the least-squares slope of log||q|| over that window.
  const auto& S = res.series;
  std::size_t wi = 0, wj = 0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    for (std::size_t j = i + 1; j < S.size(); ++j) {
      if (S[j].s - S[i].s > opt.decay_window + 1e-9) break;
      if (S[j].q_norm > 0.0 && S[i].q_norm / S[j].q_norm > res.best_decay_factor) {
        res.best_decay_factor = S[i].q_norm / S[j].q_norm;
        wi = i;
        wj = j;
      }
    }
  }
  if (wj > wi + 1) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double cnt = static_cast<double>(wj - wi + 1);
    for (std::size_t k = wi; k <= wj; ++k) {
      const double y = std::log(S[k].q_norm);
      sx += S[k].s;
      sy += y;
      sxx += S[k].s * S[k].s;
      sxy += S[k].s * y;
    }
    res.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    res.mu_hat = -res.slope;
  }
  if (res.verdict.empty()) {
    res.verdict = (res.best_decay_factor >= 10.0 && res.slope < 0.0) ? "trapped" : "undecided";
  }
  return res;
}

}  // namespace blowup
