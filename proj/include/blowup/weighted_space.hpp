#pragma once

// Collocation grid for rho-weighted spaces on (-1,1), the energy norms, the
// inner product phi, the degenerate operator L and its resolvent.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "blowup/params.hpp"
#include "blowup/quadrature.hpp"

namespace blowup {

using ScalarField = Eigen::VectorXd;
/// n x m: one column per component of an R^m-valued field.
using VectorField = Eigen::MatrixXd;

/// q = (q1, q2): q1 in H0, q2 in L^2_rho.
struct HState {
  VectorField q1;
  VectorField q2;

  static HState zero(int n, int m) { return {VectorField::Zero(n, m), VectorField::Zero(n, m)}; }
  int components() const { return static_cast<int>(q1.cols()); }

  HState& operator+=(const HState& o) {
    q1 += o.q1;
    q2 += o.q2;
    return *this;
  }
  HState& operator-=(const HState& o) {
    q1 -= o.q1;
    q2 -= o.q2;
    return *this;
  }
  HState& operator*=(double s) {
    q1 *= s;
    q2 *= s;
    return *this;
  }
  friend HState operator+(HState a, const HState& b) { return a += b; }
  friend HState operator-(HState a, const HState& b) { return a -= b; }
  friend HState operator*(double s, HState a) { return a *= s; }
};

/// Scalar two-component object (r1, r2), e.g. one coordinate of an HState.
struct ScalarPair {
  ScalarField first;
  ScalarField second;

  ScalarPair& operator+=(const ScalarPair& o) {
    first += o.first;
    second += o.second;
    return *this;
  }
  ScalarPair& operator-=(const ScalarPair& o) {
    first -= o.first;
    second -= o.second;
    return *this;
  }
  friend ScalarPair operator+(ScalarPair a, const ScalarPair& b) { return a += b; }
  friend ScalarPair operator-(ScalarPair a, const ScalarPair& b) { return a -= b; }
  friend ScalarPair operator*(double s, ScalarPair a) {
    a.first *= s;
    a.second *= s;
    return a;
  }
};

inline ScalarPair coordinate(const HState& q, int j) { return {q.q1.col(j), q.q2.col(j)}; }

inline void set_coordinate(HState& q, int j, const ScalarPair& r) {
  q.q1.col(j) = r.first;
  q.q2.col(j) = r.second;
}

/// rho(y) = (1-y^2)^{2/(p-1)}.
inline double rho(double y, double p) {
  if (!(std::abs(y) < 1.0)) throw std::domain_error("rho: |y| must be < 1, got " + std::to_string(y));
  return std::pow((1.0 - y) * (1.0 + y), weight_exponent(p));
}

/// Gauss-Jacobi collocation grid with weight rho. Immutable after
/// construction; validated against closed-form moments.
class WeightedGrid {
 public:
  explicit WeightedGrid(const Params& params) : params_(params) {
    params_.validate();
    const int n = params_.n;
    const double a = weight_exponent(params_.p);
    const QuadratureRule rule = gauss_jacobi(n, a);
    y_ = rule.nodes;
    w_ = rule.weights;
    lam_ = barycentric_weights(y_);
    D_ = differentiation_matrix(y_);
    L_ = degenerate_operator_matrix(y_, linear_coefficient_of_L());

    resolvent_ = (Eigen::MatrixXd::Identity(n, n) - L_).partialPivLu();

    const QuadratureRule legendre = gauss_jacobi(n, 0.0);
    legendre_weights_ = legendre.weights;
    to_legendre_ = interpolation_matrix(y_, lam_, legendre.nodes);

    const QuadratureRule singular = gauss_jacobi(n + 32, a - 1.0);
    singular_nodes_ = singular.nodes;
    singular_weights_ = singular.weights;
    to_singular_ = interpolation_matrix(y_, lam_, singular_nodes_);

    validate_moments();
  }

  const Params& params() const { return params_; }
  double p() const { return params_.p; }
  int m() const { return params_.m; }
  int size() const { return params_.n; }

  const Eigen::VectorXd& nodes() const { return y_; }
  const Eigen::VectorXd& weights() const { return w_; }
  const Eigen::MatrixXd& diff() const { return D_; }
  /// Collocation matrix of L = (1-y^2) d^2/dy^2 - 2(p+1)/(p-1) y d/dy.
  const Eigen::MatrixXd& L_matrix() const { return L_; }
  const Eigen::VectorXd& barycentric() const { return lam_; }

  /// 2(p+1)/(p-1): coefficient of the first-order term in L.
  double linear_coefficient_of_L() const { return 2.0 * (params_.p + 1.0) / (params_.p - 1.0); }

  ScalarField sample(const std::function<double(double)>& f) const {
    ScalarField v(size());
    for (int i = 0; i < size(); ++i) v(i) = f(y_(i));
    return v;
  }

  /// Solve (I - L) r = rhs in collocation form.
  ScalarField resolvent_solve(const ScalarField& rhs) const { return resolvent_.solve(rhs); }

  /// Galerkin form: loads b_i = int g l_i rho dy for the Lagrange basis l_i.
  ScalarField resolvent_solve_loads(const ScalarField& loads) const {
    return resolvent_.solve((loads.array() / w_.array()).matrix());
  }

  /// Loads int g l_i rho/(1-y^2) dy for a closed-form g, exact up to the
  /// resolution of g (auxiliary Gauss-Jacobi rule with exponent a-1).
  ScalarField singular_loads(const std::function<double(double)>& g) const {
    Eigen::VectorXd gv(singular_nodes_.size());
    for (Eigen::Index k = 0; k < gv.size(); ++k) gv(k) = g(singular_nodes_(k));
    return to_singular_.transpose() * (singular_weights_.array() * gv.array()).matrix();
  }

  /// int f g rho/(1-y^2) dy for fields on the grid (interpolants, exact).
  double singular_inner(const ScalarField& f, const ScalarField& g) const {
    const Eigen::VectorXd fz = to_singular_ * f;
    const Eigen::VectorXd gz = to_singular_ * g;
    return (singular_weights_.array() * fz.array() * gz.array()).sum();
  }

  /// Unweighted int f g dy of the interpolants (exact, via Gauss-Legendre).
  double unweighted_inner(const ScalarField& f, const ScalarField& g) const {
    const Eigen::VectorXd fl = to_legendre_ * f;
    const Eigen::VectorXd gl = to_legendre_ * g;
    return (legendre_weights_.array() * fl.array() * gl.array()).sum();
  }

 private:
  void validate_moments() const {
    const double a = weight_exponent(params_.p);
    const double mass = jacobi_mass(a);
    for (int k = 0; k <= 2 * params_.n - 1; ++k) {
      const double q = (w_.array() * y_.array().pow(k)).sum();
      const double ref = jacobi_moment(k, a);
      const double err = (k % 2 == 1) ? std::abs(q) / mass : std::abs(q - ref) / ref;
      if (!(err <= 1e-12)) {
        throw NumericalFailure("WeightedGrid: quadrature moment " + std::to_string(k) + " off by " +
                               std::to_string(err));
      }
    }
  }

  Params params_;
  Eigen::VectorXd y_, w_, lam_;
  Eigen::MatrixXd D_, L_;
  Eigen::PartialPivLU<Eigen::MatrixXd> resolvent_;
  Eigen::VectorXd legendre_weights_;
  Eigen::MatrixXd to_legendre_;
  Eigen::VectorXd singular_nodes_, singular_weights_;
  Eigen::MatrixXd to_singular_;
};

/// Convenience: build a validated grid.
inline WeightedGrid make_grid(const Params& params) { return WeightedGrid(params); }

inline double integrate_rho(const ScalarField& f, const WeightedGrid& grid) { return grid.weights().dot(f); }

inline ScalarField apply_L(const ScalarField& r, const WeightedGrid& grid) { return grid.L_matrix() * r; }

/// Weighted H0 quadratic form int (r1'.s1' (1-y^2) + r1.s1) rho dy.
inline double h0_inner(const VectorField& r, const VectorField& s, const WeightedGrid& grid) {
  const Eigen::MatrixXd dr = grid.diff() * r;
  const Eigen::MatrixXd ds = grid.diff() * s;
  const Eigen::ArrayXd w = grid.weights().array();
  const Eigen::ArrayXd wd = w * (1.0 - grid.nodes().array().square());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    acc += (w * r.col(j).array() * s.col(j).array()).sum();
    acc += (wd * dr.col(j).array() * ds.col(j).array()).sum();
  }
  return acc;
}

inline double h0_norm(const VectorField& r, const WeightedGrid& grid) {
  return std::sqrt(std::max(0.0, h0_inner(r, r, grid)));
}

inline double l2rho_inner(const VectorField& r, const VectorField& s, const WeightedGrid& grid) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) acc += grid.weights().dot(r.col(j).cwiseProduct(s.col(j)));
  return acc;
}

/// phi(q, r) = int (q1.r1 + q1'.r1'(1-y^2) + q2.r2) rho dy.
inline double phi_inner(const HState& q, const HState& r, const WeightedGrid& grid) {
  return h0_inner(q.q1, r.q1, grid) + l2rho_inner(q.q2, r.q2, grid);
}

inline double h_norm(const HState& q, const WeightedGrid& grid) {
  return std::sqrt(std::max(0.0, phi_inner(q, q, grid)));
}

/// phi restricted to scalar pairs.
inline double phi_pair(const ScalarPair& q, const ScalarPair& r, const WeightedGrid& grid) {
  return h0_inner(q.first, r.first, grid) + grid.weights().dot(q.second.cwiseProduct(r.second));
}

inline double h_norm_pair(const ScalarPair& q, const WeightedGrid& grid) {
  return std::sqrt(std::max(0.0, phi_pair(q, q, grid)));
}

/// Solve -L r + r = g. Throws NumericalFailure if the residual check fails.
inline ScalarField solve_resolvent(const ScalarField& g, const WeightedGrid& grid) {
  ScalarField r = grid.resolvent_solve(g);
  const ScalarField res = r - apply_L(r, grid) - g;
  const double res_norm = std::sqrt(grid.weights().dot(res.cwiseAbs2()));
  const double g_norm = std::sqrt(grid.weights().dot(g.cwiseAbs2()));
  if (!std::isfinite(res_norm) || res_norm > 1e-9 * std::max(1.0, g_norm)) {
    throw NumericalFailure("solve_resolvent: residual " + std::to_string(res_norm) + " for rhs norm " +
                           std::to_string(g_norm));
  }
  return r;
}

/// Unweighted H1(-1,1) norm of a vector field, used by the stationary-set
/// distance diagnostic.
inline double h1_unweighted_norm(const VectorField& r, const WeightedGrid& grid) {
  const Eigen::MatrixXd dr = grid.diff() * r;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    acc += grid.unweighted_inner(r.col(j), r.col(j)) + grid.unweighted_inner(dr.col(j), dr.col(j));
  }
  return std::sqrt(std::max(0.0, acc));
}

inline double l2_unweighted_norm(const VectorField& r, const WeightedGrid& grid) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) acc += grid.unweighted_inner(r.col(j), r.col(j));
  return std::sqrt(std::max(0.0, acc));
}

}  // namespace blowup
