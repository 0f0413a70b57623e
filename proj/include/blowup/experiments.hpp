#pragma once

// Configured experiments shared by the command-line runner and the acceptance
// suite. Each experiment reads a flat key=value configuration and returns a
// report of named checks with measured values and tolerances.

#include <json.hpp>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/evolution.hpp"
#include "blowup/modulation.hpp"
#include "blowup/params.hpp"
#include "blowup/rotations.hpp"
#include "blowup/series_io.hpp"
#include "blowup/solitons.hpp"
#include "blowup/spectral.hpp"
#include "blowup/weighted_space.hpp"

namespace blowup {

using json = nlohmann::json;

/// Invalid command, key or value.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExperimentConfig {
 public:
  std::string command;

  ExperimentConfig() = default;
  explicit ExperimentConfig(std::string cmd) : command(std::move(cmd)) {}

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Parse "key=value".
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }

  /// Merge a JSON object whose keys are the same as the key=value form; arrays
  /// become comma lists. Existing keys win.
  void merge_json(const json& j) {
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (values_.count(key)) continue;
      if (val.is_array()) {
        std::string s;
        for (const auto& e : val) {
          if (!s.empty()) s += ',';
          s += scalar_text(e);
        }
        values_[key] = s;
      } else {
        values_[key] = scalar_text(val);
      }
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double get_double(const std::string& key, double def) const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : parse_double(key, it->second);
  }

  int get_int(const std::string& key, int def) const {
    const double v = get_double(key, def);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError(key + " must be an integer");
    return static_cast<int>(v);
  }

  std::string get_string(const std::string& key, const std::string& def) const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(parse_double(key, cell));
    if (out.empty()) throw UsageError(key + " must not be empty");
    return out;
  }

  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, val] : values_) {
      if (!allowed.count(key)) throw UsageError("unknown key '" + key + "' for command " + command);
    }
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [key, val] : values_) j[key] = val;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;

  static std::string scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_g17(v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    throw UsageError("config values must be numbers, strings or arrays of them");
  }

  static double parse_double(const std::string& key, const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw UsageError(key + ": not a number: '" + s + "'");
    }
    if (pos != s.size() || !std::isfinite(v)) throw UsageError(key + ": not a number: '" + s + "'");
    return v;
  }
};

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string relation;  // "<=", ">=", "<", ">"
  bool pass = false;
};

struct RunReport {
  std::string command;
  json config = json::object();
  std::vector<CheckResult> checks;
  json fitted = json::object();
  std::vector<std::string> series_paths;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }

  void add(const std::string& name, double measured, const std::string& rel, double tol) {
    bool ok = false;
    if (rel == "<=") ok = measured <= tol;
    else if (rel == ">=") ok = measured >= tol;
    else if (rel == "<") ok = measured < tol;
    else if (rel == ">") ok = measured > tol;
    else throw std::invalid_argument("RunReport: unknown relation " + rel);
    checks.push_back({name, measured, tol, rel, ok && std::isfinite(measured)});
  }
  void le(const std::string& name, double measured, double tol) { add(name, measured, "<=", tol); }
  void ge(const std::string& name, double measured, double tol) { add(name, measured, ">=", tol); }

  json to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["passed"] = passed();
    json cs = json::array();
    for (const auto& c : checks) {
      json o;
      o["name"] = c.name;
      o["measured"] = std::isfinite(c.measured) ? json(c.measured) : json(format_g17(c.measured));
      o["relation"] = c.relation;
      o["tolerance"] = c.tolerance;
      o["pass"] = c.pass;
      cs.push_back(o);
    }
    j["checks"] = cs;
    j["fitted"] = fitted;
    j["series"] = series_paths;
    return j;
  }
};

namespace detail {

inline Params params_from(const ExperimentConfig& cfg, double p_def = 3.0, int m_def = 3, int n_def = 128) {
  Params P;
  P.p = cfg.get_double("p", p_def);
  P.m = cfg.get_int("m", m_def);
  P.n = cfg.get_int("n", n_def);
  try {
    P.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return P;
}

inline Eigen::VectorXd random_unit(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(m);
  do {
    for (int k = 0; k < m; ++k) v(k) = nd(rng);
  } while (v.norm() < 1e-3);
  return v / v.norm();
}

/// Angles with cos(theta_i) >= 1/2.
inline Angles random_admissible_angles(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> ud(-std::numbers::pi / 3.0, std::numbers::pi / 3.0);
  Angles th(m - 1);
  for (int k = 0; k < m - 1; ++k) th(k) = ud(rng);
  return th;
}

inline std::string key_d(double d) { return format_g17(d); }

/// `base` with "_<tag>" inserted before the extension.
inline std::string tagged_path(const std::string& base, const std::string& tag) {
  std::filesystem::path p(base);
  const std::string stem = p.stem().string() + "_" + tag;
  return (p.parent_path() / (stem + p.extension().string())).string();
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Soliton family: stationarity residual and energy invariance.
inline RunReport run_stationary_check(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "n", "d", "omegas", "seed", "residual_tol", "energy_tol"});
  RunReport rep{cfg.command, cfg.to_json()};
  const std::vector<double> ps = cfg.get_list("p", {2.0, 3.0, 5.0});
  const std::vector<double> ds = cfg.get_list("d", {0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9});
  const int m = cfg.get_int("m", 3);
  const int n = cfg.get_int("n", 128);
  const int omegas = cfg.get_int("omegas", 5);
  const double res_tol = cfg.get_double("residual_tol", 1e-8);
  const double e_tol = cfg.get_double("energy_tol", 1e-6);
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.get_int("seed", 1)));
  for (double d : ds) {
    if (!(std::abs(d) < 1.0)) throw UsageError("d must satisfy |d| < 1");
  }
  for (double p : ps) {
    Params P{p, m, n};
    try {
      P.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const WeightedGrid g(P);
    const double E0 = soliton_energy(p);
    double max_res = 0.0, max_rel = 0.0;
    for (double d : ds) {
      for (int k = 0; k < omegas; ++k) {
        const SolitonParams sp{d, detail::random_unit(rng, m)};
        const HState st = soliton_state(sp, g);
        max_res = std::max(max_res, stationary_residual(st.q1, g).cwiseAbs().maxCoeff());
        max_rel = std::max(max_rel, std::abs(energy(st, g) - E0) / E0);
      }
    }
    const std::string tag = "p=" + format_g17(p);
    rep.le("stationarity residual, " + tag, max_res, res_tol);
    rep.le("relative energy deviation, " + tag, max_rel, e_tol);
    rep.fitted["E(kappa0,0), " + tag] = E0;
    if (p == 3.0) {
      const HState k0 = soliton_state({0.0, unit_vector(m, 0)}, g);
      rep.le("E(kappa0,0) - 4/3, p=3", std::abs(energy(k0, g) - 4.0 / 3.0), 1e-10);
    }
  }
  return rep;
}

/// Modulus ODE: kbar translates for mu = 0, positivity and first integral for mu > 0.
inline RunReport run_classify_ode(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "shifts", "mu", "rho0", "xi_range", "xi_max", "translate_tol", "drift_tol", "eps0"});
  RunReport rep{cfg.command, cfg.to_json()};
  const double p = cfg.get_double("p", 3.0);
  if (!(p > 1.0)) throw UsageError("p must be > 1");
  const std::vector<double> shifts = cfg.get_list("shifts", {0.0, 0.7, -1.3});
  const std::vector<double> mus = cfg.get_list("mu", {0.1, 1.0});
  const double rho0 = cfg.get_double("rho0", kappa0(p));
  const double xi_range = cfg.get_double("xi_range", 10.0);
  const double xi_max = cfg.get_double("xi_max", 50.0);
  const double drift_tol = cfg.get_double("drift_tol", 1e-8);

  double max_err = 0.0, max_drift0 = 0.0;
  for (double c : shifts) {
    const OdeState init{kbar(c, p), kbar_deriv(c, p), 0.0, 0.0};
    for (double end : {xi_range, -xi_range}) {
      const OdeTrajectory tr = classify_ode_integrate(init, end, p);
      for (const auto& smp : tr.samples) max_err = std::max(max_err, std::abs(smp.state.rho_val - kbar(smp.xi + c, p)));
      max_drift0 = std::max(max_drift0, tr.max_first_integral_drift);
    }
  }
  rep.le("mu=0 sup distance to kbar translates", max_err, cfg.get_double("translate_tol", 1e-6));
  rep.le("mu=0 first integral drift", max_drift0, drift_tol);
  for (double mu : mus) {
    if (!(mu > 0.0)) throw UsageError("mu values must be positive");
    const OdeState init{rho0, 0.0, mu / std::pow(rho0, 4), mu};
    const OdeTrajectory tr = classify_ode_integrate(init, xi_max, p);
    const std::string tag = "mu=" + format_g17(mu);
    rep.ge("min rho over [0,xi_max], " + tag, tr.min_rho, cfg.get_double("eps0", 0.01));
    rep.le("first integral drift, " + tag, tr.max_first_integral_drift, drift_tol);
    rep.fitted["observed eps0, " + tag] = tr.min_rho;
  }
  return rep;
}

/// Rotation family identities.
inline RunReport run_rotation_check(const ExperimentConfig& cfg) {
  cfg.require_known({"m", "trials", "seed", "tol", "closed_tol"});
  RunReport rep{cfg.command, cfg.to_json()};
  const std::vector<double> ms = cfg.get_list("m", {2, 3, 4, 5, 6});
  const int trials = cfg.get_int("trials", 1000);
  const double tol = cfg.get_double("tol", 1e-12);
  const double closed_tol = cfg.get_double("closed_tol", 1e-13);
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.get_int("seed", 2)));
  for (double md : ms) {
    const int m = static_cast<int>(md);
    if (md != m || m < 2) throw UsageError("m values must be integers >= 2");
    double orth = 0, closed = 0, off_plane = 0, along_e1 = 0, in_plane = 0;
    double alt = 0, fact = 0, opnorm = 0, contraction = 0, lip = 0;
    for (int t = 0; t < trials; ++t) {
      const Angles th = detail::random_admissible_angles(rng, m);
      const SquareMatrix R = compose_R(th);
      orth = std::max(orth, (R.transpose() * R - SquareMatrix::Identity(m, m)).cwiseAbs().maxCoeff());
      closed = std::max(closed, (closed_form_R(th) - R).cwiseAbs().maxCoeff());
      const Angles th2 = detail::random_admissible_angles(rng, m);
      lip = std::max(lip, (compose_R(th2) - R).norm() / (th2 - th).norm());
      const Eigen::VectorXd z = detail::random_unit(rng, m) * std::exp(std::normal_distribution<double>(0, 1)(rng));
      for (int i = 2; i <= m; ++i) {
        const SquareMatrix A = generator_A(th, i);
        const Eigen::VectorXd Ae1 = A.col(0);
        for (int j = 2; j <= m; ++j) {
          if (j != i) off_plane = std::max(off_plane, std::abs(Ae1(j - 1)));
        }
        along_e1 = std::max(along_e1, std::abs(Ae1(0)));
        in_plane = std::max(in_plane, std::abs(Ae1(i - 1) - cos_product(th, i + 1, m)));
        alt = std::max(alt, (inverse_derivative_form(th, i) + A).cwiseAbs().maxCoeff());
        fact = std::max(fact, (generator_A_direct(th, i) - A).cwiseAbs().maxCoeff());
        opnorm = std::max(opnorm, Eigen::JacobiSVD<SquareMatrix>(A).singularValues()(0));
        contraction = std::max(contraction, (A * z).norm() / z.norm());
      }
    }
    const std::string tag = "m=" + std::to_string(m);
    rep.le("|R^T R - I|, " + tag, orth, tol);
    rep.le("|closed form - product|, " + tag, closed, closed_tol);
    rep.le("<e_j, A_i e1> = 0 for j != 1, i, " + tag, off_plane, tol);
    rep.le("<e1, A_i e1> = 0, " + tag, along_e1, tol);
    rep.le("<e_i, A_i e1> = prod_{k>i} cos theta_k, " + tag, in_plane, tol);
    rep.le("(dR^{-1}/dtheta_i) R + A_i, " + tag, alt, tol);
    rep.le("A_i factored vs R^T dR, " + tag, fact, tol);
    rep.le("max |A_i z|/|z|, " + tag, contraction, 1.0 + tol);
    rep.le("operator norm of A_i, " + tag, opnorm, 1.0 + tol);
    rep.fitted["Lipschitz constant of theta -> R_theta, " + tag] = lip;
  }
  return rep;
}

/// Coercivity constant of a quadratic form on random remainder samples:
/// max over samples of max(form/||r||^2, ||r||^2/form); infinite if the form
/// is not positive on some sample.
struct CoercivityFit {
  double c0 = 0.0;
  double min_ratio = INFINITY;
};

inline std::pair<CoercivityFit, CoercivityFit> fit_coercivity(double d, int samples, std::uint64_t seed,
                                                              const WeightedGrid& g) {
  const SpectralFrame sf = make_spectral_frame(d, g);
  std::mt19937_64 rng(seed);
  CoercivityFit bar, tilde;
  auto update = [](CoercivityFit& f, double form, double norm2) {
    const double r = form / norm2;
    f.min_ratio = std::min(f.min_ratio, r);
    f.c0 = r > 0.0 ? std::max({f.c0, r, 1.0 / r}) : INFINITY;
  };
  for (int k = 0; k < samples; ++k) {
    const ScalarPair rb = decompose_bar(sf, random_smooth_pair(rng, g), g).remainder;
    update(bar, form_bar(d, rb, rb, g), phi_pair(rb, rb, g));
    const ScalarPair rt = decompose_tilde(sf, random_smooth_pair(rng, g), g).remainder;
    update(tilde, form_tilde(d, rt, rt, g), phi_pair(rt, rt, g));
  }
  return {bar, tilde};
}

/// Eigenpairs, dual modes and coercivity of the linearized operators.
inline RunReport run_spectral_check(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "n", "n_fine", "d", "samples", "seed", "residual_tol", "biorth_tol", "c0_spread"});
  RunReport rep{cfg.command, cfg.to_json()};
  const Params P = detail::params_from(cfg);
  Params Pf = P;
  Pf.n = cfg.get_int("n_fine", 192);
  const std::vector<double> ds = cfg.get_list("d", {0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9});
  const int samples = cfg.get_int("samples", 100);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 3));
  const double res_tol = cfg.get_double("residual_tol", 1e-7);
  const double bi_tol = cfg.get_double("biorth_tol", 1e-6);
  const double spread = cfg.get_double("c0_spread", 0.1);
  const WeightedGrid g(P), gf(Pf);
  double max_res = 0.0, max_bi = 0.0, min_form = INFINITY, max_spread = 0.0;
  for (double d : ds) {
    if (!(std::abs(d) < 1.0)) throw UsageError("d must satisfy |d| < 1");
    const SpectralFrame sf = make_spectral_frame(d, g);
    for (int lam : {0, 1}) {
      const ScalarPair F = F_bar(d, lam, g);
      max_res = std::max(max_res, h_norm_pair(apply_Lbar(d, F, g) - static_cast<double>(lam) * F, g));
    }
    max_res = std::max(max_res, h_norm_pair(apply_Ltilde(d, F_tilde(d, g), g), g));
    const EigenData* bars[2] = {&sf.bar0, &sf.bar1};
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        max_bi = std::max(max_bi, std::abs(phi_pair(bars[i]->W, bars[j]->F, g) - (i == j ? 1.0 : 0.0)));
      }
    }
    max_bi = std::max(max_bi, std::abs(phi_pair(sf.tilde0.W, sf.tilde0.F, g) - 1.0));
    const auto [b, t] = fit_coercivity(d, samples, seed, g);
    const auto [bf, tf] = fit_coercivity(d, samples, seed, gf);
    min_form = std::min({min_form, b.min_ratio, t.min_ratio, bf.min_ratio, tf.min_ratio});
    max_spread = std::max({max_spread, std::abs(b.c0 / bf.c0 - 1.0), std::abs(t.c0 / tf.c0 - 1.0)});
    const std::string tag = "d=" + detail::key_d(d);
    rep.fitted["C0 bar, " + tag] = {{"n", b.c0}, {"n_fine", bf.c0}};
    rep.fitted["C0 tilde, " + tag] = {{"n", t.c0}, {"n_fine", tf.c0}};
    rep.fitted["W_bar normalization / closed form, " + tag] = {sf.bar0.c_norm / sf.bar0.c_closed,
                                                               sf.bar1.c_norm / sf.bar1.c_closed};
    rep.fitted["W_tilde normalization / closed form, " + tag] = sf.tilde0.c_norm / sf.tilde0.c_closed;
  }
  rep.le("eigen-residual in H", max_res, res_tol);
  rep.le("biorthogonality |phi(W_i,F_j) - delta_ij|", max_bi, bi_tol);
  rep.add("min form/||r||^2 on remainder samples", min_form, ">", 0.0);
  rep.le("relative change of C0 between n and n_fine", max_spread, spread);
  return rep;
}

/// Physical solver against exact blow-up solutions.
inline RunReport run_simulate_physical(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "profile", "T", "d", "x0", "nx", "x_min", "x_max", "eta", "seed", "amplitude",
                     "rel_tol", "T_tol", "out"});
  RunReport rep{cfg.command, cfg.to_json()};
  const double p = cfg.get_double("p", 3.0);
  const int m = cfg.get_int("m", 3);
  if (!(p > 1.0) || m < 1) throw UsageError("need p > 1 and m >= 1");
  const std::string profile = cfg.get_string("profile", "ode");
  const double T = cfg.get_double("T", 1.0);
  const double a = weight_exponent(p);
  const double T_tol = cfg.get_double("T_tol", 1e-3);
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.get_int("seed", 4)));
  const Eigen::VectorXd omega = detail::random_unit(rng, m);
  PhysicalOptions opt;
  opt.eta = cfg.get_double("eta", 1e-3);
  opt.t_max = 3.0 * T;

  if (profile == "ode") {
    const int nx = cfg.get_int("nx", 33);
    const PhysicalState init = ode_blowup_data(T, omega, p, cfg.get_double("x_min", -1.0), cfg.get_double("x_max", 1.0), nx);
    const PhysicalTrajectory tr = simulate_physical(init, p, opt);
    const double cap = cfg.get_double("amplitude", 1e3);
    const Eigen::Index mid = nx / 2;
    double max_rel = 0.0;
    for (const auto& s : tr.snapshots) {
      const Eigen::VectorXd exact = kappa0(p) * std::pow(T - s.t, -a) * omega;
      if (exact.norm() > cap) break;
      for (Eigen::Index i = 0; i < s.points(); ++i) {
        max_rel = std::max(max_rel, (s.u.row(i).transpose() - exact).norm() / exact.norm());
      }
    }
    const BlowupEstimate est = estimate_blowup(tr, init.x(mid), p);
    rep.le("max relative error until amplitude cap", max_rel, cfg.get_double("rel_tol", 1e-4));
    rep.le("|T_est - T|", std::abs(est.T_est - T), T_tol);
    rep.fitted["T_est"] = est.T_est;
    rep.fitted["fit_quality"] = est.fit_quality;
    if (cfg.has("out")) {
      const std::string path = cfg.get_string("out", "");
      std::ofstream os(path, std::ios::binary);
      if (!os) throw std::runtime_error("cannot open " + path);
      os << "t,amplitude";
      for (int k = 1; k <= m; ++k) os << ",u_" << k;
      os << '\n';
      for (const auto& s : tr.snapshots) {
        os << format_g17(s.t) << ',' << format_g17(s.u.row(mid).norm());
        for (int k = 0; k < m; ++k) os << ',' << format_g17(s.u(mid, k));
        os << '\n';
      }
      rep.series_paths.push_back(path);
    }
  } else if (profile == "boosted") {
    const double d = cfg.get_double("d", 0.3);
    if (!(std::abs(d) < 1.0)) throw UsageError("d must satisfy |d| < 1");
    const std::vector<double> x0s = cfg.get_list("x0", {0.0, 0.05});
    const PhysicalState init = boosted_blowup_data(T, d, 0.0, omega, p, cfg.get_double("x_min", -1.5),
                                                   cfg.get_double("x_max", 1.5), cfg.get_int("nx", 801));
    opt.cone_margin = 4.0 * init.dx;
    std::vector<double> Ts;
    for (double x0 : x0s) {
      const BlowupEstimate est = estimate_blowup_in_cone(init, x0, p, opt);
      Ts.push_back(est.T_est);
      rep.le("|T_est - T(x0)|, x0=" + format_g17(x0), std::abs(est.T_est - (T + d * x0)), T_tol);
    }
    double slope = 0.0;
    for (std::size_t k = 1; k < Ts.size(); ++k) {
      slope = std::max(slope, std::abs((Ts[k] - Ts[k - 1]) / (x0s[k] - x0s[k - 1])));
    }
    if (Ts.size() > 1) rep.add("fitted Lipschitz slope of T(x)", slope, "<", 1.0);
    rep.fitted["T_est"] = Ts;
    rep.fitted["noncharacteristic_slope"] = slope;
  } else {
    throw UsageError("profile must be 'ode' or 'boosted'");
  }
  return rep;
}

/// Perturbed soliton in the frame (d, theta) whose unstable coefficient is
/// made non-positive, so the trajectory stays bounded in self-similar time.
inline HState stabilized_perturbed_soliton(std::mt19937_64& rng, double eps, const WeightedGrid& g) {
  std::uniform_real_distribution<double> ud(-0.5, 0.5);
  const SolitonFrame f{ud(rng), detail::random_admissible_angles(rng, g.m())};
  HState q = random_perturbation(rng, eps, g);
  const EigenData unstable = W_bar(f.d, 1, g);
  const double a1 = project(unstable, coordinate(q, 0), g);
  if (a1 > 0.0) {
    q.q1.col(0) -= 2.0 * a1 * unstable.F.first;
    q.q2.col(0) -= 2.0 * a1 * unstable.F.second;
  }
  return assemble(f, q, g);
}

/// Energy monotonicity along perturbed-soliton trajectories.
inline RunReport run_simulate_selfsim(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "n", "runs", "eps", "s_len", "dt", "seed", "budget", "refine", "out"});
  RunReport rep{cfg.command, cfg.to_json()};
  const Params P = detail::params_from(cfg);
  const WeightedGrid g(P);
  const int runs = cfg.get_int("runs", 10);
  const double eps = cfg.get_double("eps", 1e-2);
  const double s_len = cfg.get_double("s_len", 20.0);
  const double budget = cfg.get_double("budget", 1e-6);
  const bool refine = cfg.get_int("refine", 1) != 0;
  SelfSimOptions so;
  so.dt = cfg.get_double("dt", selfsim_stable_dt(g));
  so.record_every = 0.1;
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.get_int("seed", 5)));
  double worst = 0.0, worst_fine = 0.0, min_drop = INFINITY;
  for (int r = 0; r < runs; ++r) {
    const HState v0 = stabilized_perturbed_soliton(rng, eps, g);
    const SelfSimState st{v0.q1, v0.q2, 0.0};
    const SelfSimTrajectory tr = simulate_selfsim(st, s_len, g, so);
    worst = std::max(worst, tr.max_energy_increase);
    min_drop = std::min(min_drop, tr.energies.front() - tr.energies.back());
    if (refine) {
      SelfSimOptions fine = so;
      fine.dt = 0.5 * tr.dt;
      worst_fine = std::max(worst_fine, simulate_selfsim(st, s_len, g, fine).max_energy_increase);
    }
    if (r == 0 && cfg.has("out")) {
      const std::string path = cfg.get_string("out", "");
      std::ofstream os(path, std::ios::binary);
      if (!os) throw std::runtime_error("cannot open " + path);
      os << "s,E,h_norm\n";
      for (const auto& s : tr.states) {
        os << format_g17(s.s) << ',' << format_g17(energy(s.as_h(), g)) << ',' << format_g17(h_norm(s.as_h(), g))
           << '\n';
      }
      rep.series_paths.push_back(path);
    }
    if (r == 0) rep.fitted["dt"] = tr.dt;
  }
  rep.le("max per-step energy increase at dt", worst, budget);
  if (refine) rep.le("max per-step energy increase at dt/2", worst_fine, budget / 16.0);
  rep.fitted["smallest total energy decrease"] = min_drop;
  return rep;
}

/// Modulation near a reference frame.
inline RunReport run_modulation_check(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "n", "d", "theta", "eps", "seed", "recovery_tol", "orth_tol", "k_spread", "jac_factor"});
  RunReport rep{cfg.command, cfg.to_json()};
  const Params P = detail::params_from(cfg);
  const WeightedGrid g(P);
  SolitonFrame hat;
  hat.d = cfg.get_double("d", 0.3);
  if (!(std::abs(hat.d) < 1.0)) throw UsageError("d must satisfy |d| < 1");
  std::vector<double> th = cfg.get_list("theta", P.m == 3 ? std::vector<double>{0.2, -0.1} : std::vector<double>(P.m - 1, 0.1));
  if (static_cast<int>(th.size()) != P.m - 1) throw UsageError("theta needs m-1 entries");
  hat.theta = Eigen::Map<Eigen::VectorXd>(th.data(), P.m - 1);
  if ((hat.theta.array().cos() < 0.75).any()) throw UsageError("reference angles need cos(theta_i) >= 3/4");
  const std::vector<double> epss = cfg.get_list("eps", {1e-4, 1e-3, 1e-2});
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 6));

  SolitonFrame guess = hat;
  guess.d += 0.05;
  guess.theta.array() += 0.05;
  const ModulatedState exact = modulate(assemble(hat, HState::zero(P.n, P.m), g), guess, g);
  rep.le("exact soliton recovery", std::abs(exact.frame.d - hat.d) + (exact.frame.theta - hat.theta).cwiseAbs().sum(),
         cfg.get_double("recovery_tol", 1e-10));

  std::vector<double> Ks;
  for (double eps : epss) {
    std::mt19937_64 rng(seed);
    const HState v = assemble(hat, random_perturbation(rng, eps, g), g);
    const ModulatedState ms = modulate(v, hat, g);
    const SpectralFrame sf = make_spectral_frame(ms.frame.d, g);
    double orth = std::abs(project(sf.bar0, coordinate(ms.q, 0), g));
    for (int j = 1; j < P.m; ++j) orth = std::max(orth, std::abs(project(sf.tilde0, coordinate(ms.q, j), g)));
    const double disp = std::abs(ms.frame.lambda() - hat.lambda()) + (ms.frame.theta - hat.theta).cwiseAbs().sum();
    Ks.push_back(disp / eps);
    const Eigen::MatrixXd J = Phi_jacobian(v, ms.frame, g);
    const Eigen::MatrixXd J0 = Phi_jacobian_leading(ms.frame, P.p);
    const std::string tag = "eps=" + format_g17(eps);
    rep.le("orthogonality residual, " + tag, orth, cfg.get_double("orth_tol", 1e-10));
    rep.le("max |J_ii - leading J_ii|, " + tag, (J.diagonal() - J0.diagonal()).cwiseAbs().maxCoeff(),
           cfg.get_double("jac_factor", 5.0) * eps);
    rep.fitted["K, " + tag] = disp / eps;
    rep.fitted["Newton iterations, " + tag] = ms.iterations;
    rep.fitted["max off-diagonal |J_ij|, " + tag] = (J - Eigen::MatrixXd(J.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
  }
  const double kmax = *std::max_element(Ks.begin(), Ks.end());
  const double kmin = *std::min_element(Ks.begin(), Ks.end());
  rep.le("K spread max/min - 1 across eps", kmax / kmin - 1.0, cfg.get_double("k_spread", 0.25));
  rep.fitted["K"] = kmax;
  return rep;
}

/// Trapping near a soliton with re-modulation and the dynamics monitors.
inline RunReport run_trapping(const ExperimentConfig& cfg) {
  cfg.require_known({"p", "m", "n", "d", "theta", "eps", "s_len", "dt", "seed", "escape_ratio", "noise_floor",
                     "orth_tol", "decay", "window", "k_growth", "drift", "shoot", "kick", "out"});
  RunReport rep{cfg.command, cfg.to_json()};
  const Params P = detail::params_from(cfg);
  const WeightedGrid g(P);
  SolitonFrame star;
  star.d = cfg.get_double("d", 0.0);
  if (!(std::abs(star.d) < 1.0)) throw UsageError("d must satisfy |d| < 1");
  const std::vector<double> th = cfg.get_list("theta", std::vector<double>(P.m - 1, 0.0));
  if (static_cast<int>(th.size()) != P.m - 1) throw UsageError("theta needs m-1 entries");
  star.theta = Eigen::Map<const Eigen::VectorXd>(th.data(), P.m - 1);
  if (!star.in_regime()) throw UsageError("theta needs cos(theta_i) >= 1/2");
  std::vector<double> epss = cfg.get_list("eps", {1e-3, 1e-2});
  std::sort(epss.begin(), epss.end());
  TrappingOptions opt;
  opt.s_len = cfg.get_double("s_len", 20.0);
  opt.dt = cfg.get_double("dt", 0.0);
  opt.escape_ratio = cfg.get_double("escape_ratio", 10.0);
  opt.noise_floor = cfg.get_double("noise_floor", 1e-4);
  opt.decay_window = cfg.get_double("window", 10.0);
  opt.shoot = cfg.get_int("shoot", 1) != 0;
  opt.alpha_kick = cfg.get_double("kick", 0.0);
  opt.shooting_horizons.clear();
  for (double h = 5.0; h < opt.s_len - 1e-9; h += 5.0) opt.shooting_horizons.push_back(h);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 11));
  const double drift_tol = cfg.get_double("drift", 3.0);

  std::vector<double> Ks;
  for (double eps : epss) {
    std::mt19937_64 rng(seed);
    const HState pert = random_remainder_perturbation(rng, star.d, eps, g);
    const TrappingResult res = trapping_experiment(star, pert, g, opt);
    const std::string tag = "eps=" + format_g17(eps);
    rep.fitted["verdict, " + tag] = res.verdict;
    if (!res.exit_cause.empty()) rep.fitted["exit cause, " + tag] = res.exit_cause;
    rep.fitted["mu_hat, " + tag] = res.mu_hat;
    rep.fitted["F_bar_1 coefficient from shooting, " + tag] = res.beta;
    rep.fitted["final d, " + tag] = res.final_frame.d;
    rep.fitted["min E(s) - E(kappa0,0), " + tag] = res.min_energy_gap;
    rep.fitted["energy condition E >= E(kappa0,0), " + tag] = res.energy_condition;
    rep.add("trapped (1 = yes), " + tag, res.verdict == "trapped" ? 1.0 : 0.0, ">=", 1.0);
    rep.ge("best ||q|| decay factor over window, " + tag, res.best_decay_factor, cfg.get_double("decay", 10.0));
    rep.add("fitted slope of log||q||, " + tag, res.slope, "<", 0.0);
    rep.le("max re-modulated orthogonality, " + tag, res.max_orthogonality, cfg.get_double("orth_tol", 1e-8));
    Ks.push_back(res.displacement / eps);
    rep.fitted["K, " + tag] = res.displacement / eps;

    const DynamicsDiagnostics dd = monitor_dynamics(res.series, P.p, opt.noise_floor);
    rep.ge("monitor samples above noise floor, " + tag, static_cast<double>(dd.gated_samples), 3.0);
    rep.le("drift of |theta'|/||q||^2, " + tag, dd.theta_drift, drift_tol);
    rep.le("drift of |lambda'|/||q||^2, " + tag, dd.lambda_drift, drift_tol);
    rep.le("drift of |alpha_11' - alpha_11|/||q||^2, " + tag, dd.alpha_drift, drift_tol);
    rep.le("drift of |R_-|/||q||^(1+pbar), " + tag, dd.R_drift, drift_tol);
    std::size_t bad = 0;
    for (bool ok : dd.sandwich_ok) bad += !ok;
    rep.le("samples violating the b sandwich, " + tag, static_cast<double>(bad), 0.0);
    rep.fitted["monitor maxima, " + tag] = {{"theta", dd.max_theta_ratio},
                                            {"lambda", dd.max_lambda_ratio},
                                            {"alpha_1_1", dd.max_alpha_ratio},
                                            {"R_minus", dd.max_R_ratio},
                                            {"barrier", dd.max_barrier_ratio}};
    if (cfg.has("out") && !res.series.empty()) {
      const std::string base = cfg.get_string("out", "");
      const std::string path = epss.size() == 1 ? base : detail::tagged_path(base, "eps" + format_g17(eps));
      emit_series(res.series, path);
      rep.series_paths.push_back(path);
    }
  }
  if (Ks.size() > 1) {
    // Ks is ordered by increasing eps; the bound must not degrade as eps shrinks.
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < Ks.size(); ++k) worst = std::max(worst, Ks[k] / Ks.back());
    rep.le("K(smaller eps) / K(largest eps)", worst, cfg.get_double("k_growth", 1.1));
  }
  rep.fitted["K"] = Ks.empty() ? 0.0 : *std::max_element(Ks.begin(), Ks.end());
  return rep;
}

using ExperimentFn = std::function<RunReport(const ExperimentConfig&)>;

inline const std::map<std::string, ExperimentFn>& experiments() {
  static const std::map<std::string, ExperimentFn> table = {
      {"stationary-check", run_stationary_check}, {"classify-ode", run_classify_ode},
      {"rotation-check", run_rotation_check},     {"spectral-check", run_spectral_check},
      {"simulate-physical", run_simulate_physical}, {"simulate-selfsim", run_simulate_selfsim},
      {"modulation-check", run_modulation_check}, {"trapping", run_trapping},
  };
  return table;
}

inline RunReport run(const ExperimentConfig& cfg) {
  const auto& table = experiments();
  const auto it = table.find(cfg.command);
  if (it == table.end()) throw UsageError("unknown command '" + cfg.command + "'");
  return it->second(cfg);
}

}  // namespace blowup
