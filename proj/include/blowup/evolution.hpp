#pragma once

// Time integration of the physical wave equation u_tt = u_xx + |u|^{p-1}u and
// of its self-similar form, the change of variables between the two, and the
// blow-up time fit.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/params.hpp"
#include "blowup/solitons.hpp"
#include "blowup/weighted_space.hpp"

namespace blowup {

// ---------------------------------------------------------------------------
// Physical variables

/// Fields on the uniform grid x_i = x_min + i dx; one column per component.
struct PhysicalState {
  double x_min = 0.0;
  double dx = 1.0;
  Eigen::MatrixXd u;
  Eigen::MatrixXd ut;
  double t = 0.0;

  Eigen::Index points() const { return u.rows(); }
  double x(Eigen::Index i) const { return x_min + static_cast<double>(i) * dx; }
  double x_max() const { return x(points() - 1); }
};

inline PhysicalState make_physical_state(double x_min, double x_max, Eigen::Index nx, int m) {
  if (nx < 4) throw std::invalid_argument("physical grid needs at least 4 points");
  if (!(x_max > x_min)) throw std::invalid_argument("physical grid: x_max must exceed x_min");
  PhysicalState s;
  s.x_min = x_min;
  s.dx = (x_max - x_min) / static_cast<double>(nx - 1);
  s.u = Eigen::MatrixXd::Zero(nx, m);
  s.ut = Eigen::MatrixXd::Zero(nx, m);
  return s;
}

/// Index range [lo, hi] that is advanced in time; the rest stays frozen.
struct ActiveRange {
  Eigen::Index lo = 0;
  Eigen::Index hi = 0;
};

namespace detail {

inline Eigen::MatrixXd physical_acceleration(const PhysicalState& s, double p, const ActiveRange& r) {
  const Eigen::Index n = s.points();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, s.u.cols());
  const double inv = 1.0 / (s.dx * s.dx);
  for (Eigen::Index i = r.lo; i <= r.hi; ++i) {
    // reflecting ghost values u_{-1} = u_1, u_n = u_{n-2}
    const Eigen::Index il = i == 0 ? 1 : i - 1;
    const Eigen::Index ir = i == n - 1 ? n - 2 : i + 1;
    acc.row(i) = ((s.u.row(ir) - s.u.row(i)) + (s.u.row(il) - s.u.row(i))) * inv;
    const double a = s.u.row(i).norm();
    if (a > 0.0) acc.row(i) += std::pow(a, p - 1.0) * s.u.row(i);
  }
  return acc;
}

}  // namespace detail

inline double max_amplitude(const PhysicalState& s, const ActiveRange& r) {
  double out = 0.0;
  for (Eigen::Index i = r.lo; i <= r.hi; ++i) out = std::max(out, s.u.row(i).norm());
  return out;
}

/// One kick-drift-kick leapfrog step on the active range.
inline PhysicalState physical_step(const PhysicalState& state, double dt, double p,
                                   std::optional<ActiveRange> range = std::nullopt) {
  const ActiveRange r = range.value_or(ActiveRange{0, state.points() - 1});
  if (!(dt > 0.0)) throw std::invalid_argument("physical_step: dt must be positive");
  if (dt > state.dx * (1.0 + 1e-12)) throw std::invalid_argument("physical_step: dt violates the CFL limit");
  PhysicalState s = state;
  const auto rows = Eigen::seq(r.lo, r.hi);
  s.ut(rows, Eigen::all) += 0.5 * dt * detail::physical_acceleration(s, p, r)(rows, Eigen::all);
  s.u(rows, Eigen::all) += dt * s.ut(rows, Eigen::all);
  s.ut(rows, Eigen::all) += 0.5 * dt * detail::physical_acceleration(s, p, r)(rows, Eigen::all);
  s.t += dt;
  return s;
}

/// Energy of the linear part, sum (|u_t|^2 + |u_x|^2)/2 dx.
inline double linear_energy(const PhysicalState& s) {
  double e = 0.5 * s.ut.squaredNorm() * s.dx;
  for (Eigen::Index i = 0; i + 1 < s.points(); ++i) e += 0.5 * (s.u.row(i + 1) - s.u.row(i)).squaredNorm() / s.dx;
  return e;
}

struct PhysicalOptions {
  double t_max = 10.0;
  double cfl = 0.9;
  /// dt = min(cfl dx, eta / (1 + max|u|^{(p-1)/2})).
  double eta = 1e-3;
  double blowup_amplitude = 1e6;
  /// A snapshot is stored whenever max|u| grew by this factor or
  /// snapshot_dt elapsed since the last one.
  double snapshot_growth = 1.02;
  double snapshot_dt = 0.01;
  /// If set, only the backward cone |x - cone_x0| <= cone_T - t + cone_margin
  /// is advanced; the run stops at t = cone_T.
  std::optional<double> cone_x0;
  double cone_T = 0.0;
  double cone_margin = 0.0;
};

struct PhysicalTrajectory {
  std::vector<PhysicalState> snapshots;
  std::vector<double> step_times;
  std::vector<double> step_max_amplitude;
  std::vector<double> linear_energies;
  bool blew_up = false;
  std::string stop_reason;
};

inline ActiveRange active_range(const PhysicalState& s, const PhysicalOptions& opt) {
  if (!opt.cone_x0) return {0, s.points() - 1};
  const double half = opt.cone_T - s.t + opt.cone_margin;
  const double lo_x = *opt.cone_x0 - half, hi_x = *opt.cone_x0 + half;
  ActiveRange r;
  r.lo = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor((lo_x - s.x_min) / s.dx)), 0, s.points() - 1);
  r.hi = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil((hi_x - s.x_min) / s.dx)), 0, s.points() - 1);
  return r;
}

inline PhysicalTrajectory simulate_physical(const PhysicalState& initial, double p, const PhysicalOptions& opt = {}) {
  PhysicalTrajectory traj;
  PhysicalState s = initial;
  traj.snapshots.push_back(s);
  double last_amp = max_amplitude(s, active_range(s, opt));
  double last_t = s.t;
  const double t_stop = opt.cone_x0 ? std::min(opt.t_max, opt.cone_T) : opt.t_max;
  while (s.t < t_stop) {
    const ActiveRange r = active_range(s, opt);
    const double amp = max_amplitude(s, r);
    double dt = std::min(opt.cfl * s.dx, opt.eta / (1.0 + std::pow(amp, 0.5 * (p - 1.0))));
    dt = std::min(dt, t_stop - s.t);
    if (dt <= 0.0) break;
    s = physical_step(s, dt, p, r);
    const double new_amp = max_amplitude(s, r);
    traj.step_times.push_back(s.t);
    traj.step_max_amplitude.push_back(new_amp);
    if (!std::isfinite(new_amp)) {
      traj.blew_up = true;
      traj.stop_reason = "non-finite amplitude";
      break;
    }
    if (new_amp >= last_amp * opt.snapshot_growth || s.t - last_t >= opt.snapshot_dt) {
      traj.snapshots.push_back(s);
      traj.linear_energies.push_back(linear_energy(s));
      last_amp = new_amp;
      last_t = s.t;
    }
    if (new_amp >= opt.blowup_amplitude) {
      traj.blew_up = true;
      traj.stop_reason = "amplitude threshold";
      break;
    }
  }
  if (traj.snapshots.back().t != s.t) traj.snapshots.push_back(s);
  if (traj.stop_reason.empty()) traj.stop_reason = "time limit";
  return traj;
}

/// Exact space-independent blow-up solution kappa0 Omega (T - t)^{-2/(p-1)}.
inline PhysicalState ode_blowup_data(double T, const Eigen::VectorXd& omega, double p, double x_min, double x_max,
                                     Eigen::Index nx) {
  const double a = weight_exponent(p);
  PhysicalState s = make_physical_state(x_min, x_max, nx, static_cast<int>(omega.size()));
  const double amp = kappa0(p) * std::pow(T, -a);
  for (Eigen::Index i = 0; i < nx; ++i) {
    s.u.row(i) = amp * omega.transpose();
    s.ut.row(i) = a * amp / T * omega.transpose();
  }
  return s;
}

/// Boosted exact solution kappa0 (1-d^2)^{1/(p-1)} Omega (T + d(x - x0) - t)^{-2/(p-1)},
/// whose blow-up curve is T(x) = T + d(x - x0).
inline PhysicalState boosted_blowup_data(double T, double d, double x0, const Eigen::VectorXd& omega, double p,
                                         double x_min, double x_max, Eigen::Index nx) {
  check_lorentz(d);
  const double a = weight_exponent(p);
  const double K = kappa0(p) * std::pow(1.0 - d * d, 1.0 / (p - 1.0));
  PhysicalState s = make_physical_state(x_min, x_max, nx, static_cast<int>(omega.size()));
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double tau = T + d * (s.x(i) - x0);
    if (!(tau > 0.0)) throw std::domain_error("boosted_blowup_data: data singular inside the domain");
    s.u.row(i) = K * std::pow(tau, -a) * omega.transpose();
    s.ut.row(i) = a * K * std::pow(tau, -a - 1.0) * omega.transpose();
  }
  return s;
}

namespace detail {

// Four-point Lagrange interpolation of column data at x, and its derivative.
inline void cubic_at(const PhysicalState& s, const Eigen::MatrixXd& f, double x, Eigen::RowVectorXd& val,
                     Eigen::RowVectorXd* deriv) {
  const double u = (x - s.x_min) / s.dx;
  Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(u)) - 1;
  i0 = std::clamp<Eigen::Index>(i0, 0, s.points() - 4);
  const double t = u - static_cast<double>(i0);
  double w[4], dw[4];
  for (int k = 0; k < 4; ++k) {
    double num = 1.0, den = 1.0, dsum = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j == k) continue;
      num *= (t - j);
      den *= (k - j);
    }
    for (int j = 0; j < 4; ++j) {
      if (j == k) continue;
      double prod = 1.0;
      for (int l = 0; l < 4; ++l) {
        if (l == k || l == j) continue;
        prod *= (t - l);
      }
      dsum += prod;
    }
    w[k] = num / den;
    dw[k] = dsum / den / s.dx;
  }
  val = Eigen::RowVectorXd::Zero(f.cols());
  if (deriv) *deriv = Eigen::RowVectorXd::Zero(f.cols());
  for (int k = 0; k < 4; ++k) {
    val += w[k] * f.row(i0 + k);
    if (deriv) *deriv += dw[k] * f.row(i0 + k);
  }
}

}  // namespace detail

inline double local_amplitude(const PhysicalState& s, double x0) {
  Eigen::RowVectorXd v;
  detail::cubic_at(s, s.u, x0, v, nullptr);
  return v.norm();
}

struct BlowupEstimate {
  bool blowup = false;
  double x0 = 0.0;
  double T_est = std::numeric_limits<double>::quiet_NaN();
  /// RMS residual of the log-amplitude fit.
  double fit_quality = std::numeric_limits<double>::quiet_NaN();
  /// Fitted slope of T(.) at x0 from fits at x0 +- h; NaN when not computed.
  double noncharacteristic_slope = std::numeric_limits<double>::quiet_NaN();
  double growth = 1.0;
};

/// Fit log|u(x0,t)| = C - (2/(p-1)) log(T - t) over the late snapshots.
inline BlowupEstimate estimate_blowup_at(const PhysicalTrajectory& traj, double x0, double p) {
  BlowupEstimate est;
  est.x0 = x0;
  if (traj.snapshots.size() < 3) return est;
  const double a = weight_exponent(p);
  std::vector<double> t, n;
  for (const auto& s : traj.snapshots) {
    if (x0 < s.x_min || x0 > s.x_max()) throw std::domain_error("estimate_blowup: x0 outside the grid");
    t.push_back(s.t);
    n.push_back(local_amplitude(s, x0));
  }
  const double n0 = n.front();
  const double nmax = *std::max_element(n.begin(), n.end());
  est.growth = n0 > 0.0 ? nmax / n0 : (nmax > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  if (!(n0 > 0.0) || est.growth < 10.0 || !std::isfinite(nmax)) return est;

  const double cut = std::sqrt(n0 * nmax);
  std::vector<double> ft, fl;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (n[k] >= cut && std::isfinite(n[k])) {
      ft.push_back(t[k]);
      fl.push_back(std::log(n[k]));
    }
  }
  if (ft.size() < 3) return est;
  const double t_last = ft.back();

  // Seed: |u|^{-1/a} is linear in t with root T.
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double m = static_cast<double>(ft.size());
  for (std::size_t k = 0; k < ft.size(); ++k) {
    const double yk = std::exp(-fl[k] / a);
    st += ft[k];
    sy += yk;
    stt += ft[k] * ft[k];
    sty += ft[k] * yk;
  }
  const double slope = (m * sty - st * sy) / (m * stt - st * st);
  const double icpt = (sy - slope * st) / m;
  double gap_seed = slope < 0.0 ? (-icpt / slope) - t_last : 0.0;
  if (!(gap_seed > 0.0)) gap_seed = 1e-3 * std::max(1.0, std::abs(t_last));

  auto sse = [&](double z) {
    const double T = t_last + std::exp(z);
    double mean = 0.0;
    for (std::size_t k = 0; k < ft.size(); ++k) mean += fl[k] + a * std::log(T - ft[k]);
    mean /= m;
    double acc = 0.0;
    for (std::size_t k = 0; k < ft.size(); ++k) {
      const double r = fl[k] + a * std::log(T - ft[k]) - mean;
      acc += r * r;
    }
    return acc;
  };
  const double z0 = std::log(gap_seed);
  const auto best = boost::math::tools::brent_find_minima(sse, z0 - 8.0, z0 + 8.0, 52);
  est.blowup = true;
  est.T_est = t_last + std::exp(best.first);
  est.fit_quality = std::sqrt(best.second / m);
  return est;
}

/// Blow-up time at x0, plus the local slope of T(.) from fits at x0 +- h.
inline BlowupEstimate estimate_blowup(const PhysicalTrajectory& traj, double x0, double p, double h = 0.0) {
  BlowupEstimate est = estimate_blowup_at(traj, x0, p);
  if (est.blowup && h > 0.0) {
    const BlowupEstimate lo = estimate_blowup_at(traj, x0 - h, p);
    const BlowupEstimate hi = estimate_blowup_at(traj, x0 + h, p);
    if (lo.blowup && hi.blowup) est.noncharacteristic_slope = (hi.T_est - lo.T_est) / (2.0 * h);
  }
  return est;
}

/// Blow-up time at x0 using runs restricted to the backward cone of (x0, T_cap).
/// A run that reaches T_cap without blowing up inside the cone bounds T(x0)
/// from above; bisection on T_cap brackets T(x0), and the final run with the
/// largest regular T_cap supplies the data for the rate fit.
inline BlowupEstimate estimate_blowup_in_cone(const PhysicalState& initial, double x0, double p,
                                              PhysicalOptions opt, double rel_tol = 1e-3) {
  double lo = initial.t, hi = opt.t_max;
  opt.cone_x0 = x0;
  opt.cone_T = hi;
  {
    const PhysicalTrajectory first = simulate_physical(initial, p, opt);
    if (!first.blew_up) return estimate_blowup_at(first, x0, p);
  }
  while (hi - lo > rel_tol * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    opt.cone_T = mid;
    if (simulate_physical(initial, p, opt).blew_up) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  opt.cone_T = lo;
  return estimate_blowup_at(simulate_physical(initial, p, opt), x0, p);
}

// ---------------------------------------------------------------------------
// Self-similar variables

struct SelfSimState {
  VectorField w;
  VectorField ws;
  double s = 0.0;

  HState as_h() const { return {w, ws}; }
};

/// Snapshot mapped to y-nodes: w = tau^a u(x0 + y tau), ws = -a w + tau^{a+1}(u_t - y u_x).
inline SelfSimState to_selfsim_state(const PhysicalState& snap, double x0, double T, const WeightedGrid& grid) {
  const double tau = T - snap.t;
  if (!(tau > 0.0)) throw std::domain_error("to_selfsim: snapshot at or beyond the blow-up time");
  const double a = weight_exponent(grid.p());
  const int n = grid.size();
  const auto m = snap.u.cols();
  SelfSimState out{VectorField(n, m), VectorField(n, m), -std::log(tau)};
  for (int i = 0; i < n; ++i) {
    const double y = grid.nodes()(i);
    const double x = x0 + y * tau;
    if (x < snap.x_min + snap.dx || x > snap.x_max() - snap.dx) {
      throw std::domain_error("to_selfsim: light cone leaves the computational domain");
    }
    Eigen::RowVectorXd u, ux, ut;
    detail::cubic_at(snap, snap.u, x, u, &ux);
    detail::cubic_at(snap, snap.ut, x, ut, nullptr);
    const double ta = std::pow(tau, a);
    out.w.row(i) = ta * u;
    out.ws.row(i) = -a * ta * u + ta * tau * (ut - y * ux);
  }
  return out;
}

/// Every snapshot with T - t > 0 whose cone fits in the grid.
inline std::vector<SelfSimState> to_selfsim(const PhysicalTrajectory& traj, double x0, double T,
                                            const WeightedGrid& grid) {
  std::vector<SelfSimState> out;
  for (const auto& snap : traj.snapshots) {
    if (!(T - snap.t > 0.0)) continue;
    try {
      out.push_back(to_selfsim_state(snap, x0, T, grid));
    } catch (const std::domain_error&) {
      // masked: cone not covered
    }
  }
  return out;
}

/// d^2 w/ds^2 = L w - 2(p+1)/(p-1)^2 w + |w|^{p-1} w - (p+3)/(p-1) ws - 2 y d_y ws.
inline VectorField selfsim_rhs(const SelfSimState& st, const WeightedGrid& grid) {
  const double p = grid.p();
  return grid.L_matrix() * st.w - linear_coefficient(p) * st.w + power_nonlinearity(st.w, p) -
         damping_coefficient(p) * st.ws - 2.0 * (grid.nodes().asDiagonal() * (grid.diff() * st.ws));
}

/// Classical RK4 step of the first-order system (w, ws).
inline SelfSimState selfsim_step(const SelfSimState& st, double dt, const WeightedGrid& grid) {
  auto f = [&](const VectorField& w, const VectorField& ws) { return selfsim_rhs(SelfSimState{w, ws, 0.0}, grid); };
  const VectorField k1w = st.ws;
  const VectorField k1v = f(st.w, st.ws);
  const VectorField k2w = st.ws + 0.5 * dt * k1v;
  const VectorField k2v = f(st.w + 0.5 * dt * k1w, k2w);
  const VectorField k3w = st.ws + 0.5 * dt * k2v;
  const VectorField k3v = f(st.w + 0.5 * dt * k2w, k3w);
  const VectorField k4w = st.ws + dt * k3v;
  const VectorField k4v = f(st.w + dt * k3w, k4w);
  SelfSimState out;
  out.w = st.w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
  out.ws = st.ws + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  out.s = st.s + dt;
  return out;
}

/// Spectral radius of the linear part of the first-order self-similar system.
inline double selfsim_spectral_radius(const WeightedGrid& grid) {
  const int n = grid.size();
  const double p = grid.p();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  A.topRightCorner(n, n).setIdentity();
  A.bottomLeftCorner(n, n) = grid.L_matrix() - linear_coefficient(p) * Eigen::MatrixXd::Identity(n, n);
  A.bottomRightCorner(n, n) =
      -damping_coefficient(p) * Eigen::MatrixXd::Identity(n, n) - 2.0 * grid.nodes().asDiagonal() * grid.diff();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Step size inside the RK4 stability region with a safety factor.
inline double selfsim_stable_dt(const WeightedGrid& grid, double safety = 0.8) {
  return safety * 2.5 / selfsim_spectral_radius(grid);
}

struct SelfSimOptions {
  /// Non-positive: use selfsim_stable_dt.
  double dt = 0.0;
  /// Store a state every `record_every` units of s (always the first and last).
  double record_every = 0.1;
  double max_h_norm = 1e6;
};

struct SelfSimTrajectory {
  std::vector<SelfSimState> states;
  std::vector<double> step_s;
  std::vector<double> energies;
  /// Largest single-step increase of E (0 if E never increased).
  double max_energy_increase = 0.0;
  double dt = 0.0;
};

inline SelfSimTrajectory simulate_selfsim(const SelfSimState& initial, double s_len, const WeightedGrid& grid,
                                          const SelfSimOptions& opt = {},
                                          const std::function<void(const SelfSimState&)>& on_record = {}) {
  SelfSimTrajectory traj;
  traj.dt = opt.dt > 0.0 ? opt.dt : selfsim_stable_dt(grid);
  const long steps = std::max<long>(1, static_cast<long>(std::ceil(s_len / traj.dt - 1e-9)));
  const double dt = s_len / static_cast<double>(steps);
  traj.dt = dt;
  const long every = std::max<long>(1, static_cast<long>(std::llround(opt.record_every / dt)));
  SelfSimState st = initial;
  double e_prev = energy(st.as_h(), grid);
  traj.step_s.push_back(st.s);
  traj.energies.push_back(e_prev);
  traj.states.push_back(st);
  if (on_record) on_record(st);
  for (long k = 1; k <= steps; ++k) {
    st = selfsim_step(st, dt, grid);
    const double e = energy(st.as_h(), grid);
    if (!std::isfinite(e) || h_norm(st.as_h(), grid) > opt.max_h_norm) {
      throw NumericalFailure("simulate_selfsim: instability at s=" + std::to_string(st.s));
    }
    traj.max_energy_increase = std::max(traj.max_energy_increase, e - e_prev);
    e_prev = e;
    traj.step_s.push_back(st.s);
    traj.energies.push_back(e);
    if (k % every == 0 || k == steps) {
      traj.states.push_back(st);
      if (on_record) on_record(st);
    }
  }
  return traj;
}

/// ||w||_{H1(-1,1)} + ||ws||_{L2(-1,1)} for a self-similar state.
inline double selfsim_bound_monitor(const SelfSimState& st, const WeightedGrid& grid) {
  return h1_unweighted_norm(st.w, grid) + l2_unweighted_norm(st.ws, grid);
}

}  // namespace blowup
