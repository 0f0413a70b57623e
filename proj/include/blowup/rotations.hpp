#pragma once

// Ordered products of Givens rotations in the (e1, e_i) planes and their
// logarithmic derivatives. Angle and plane indices are 1-based (i = 2..m) in
// the public API to match the usual statement of the parametrization;
// theta(k) stores the angle of plane k+2.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace blowup {

using SquareMatrix = Eigen::MatrixXd;

/// Angles (theta_2, ..., theta_m); size m-1.
using Angles = Eigen::VectorXd;

inline int angles_dimension(const Angles& theta) { return static_cast<int>(theta.size()) + 1; }

inline void check_plane(int i, int m) {
  if (i < 2 || i > m) throw std::out_of_range("rotation plane index must be in 2..m, got " + std::to_string(i));
}

inline double angle(const Angles& theta, int i) { return theta(i - 2); }

/// Rotation of the (e1, e_i) plane by `ang`.
inline SquareMatrix givens(int i, double ang, int m) {
  check_plane(i, m);
  SquareMatrix R = SquareMatrix::Identity(m, m);
  const double c = std::cos(ang), s = std::sin(ang);
  R(0, 0) = c;
  R(0, i - 1) = -s;
  R(i - 1, 0) = s;
  R(i - 1, i - 1) = c;
  return R;
}

/// Projection onto span(e1, e_i).
inline SquareMatrix plane_projection(int i, int m) {
  check_plane(i, m);
  SquareMatrix P = SquareMatrix::Zero(m, m);
  P(0, 0) = 1.0;
  P(i - 1, i - 1) = 1.0;
  return P;
}

/// R_theta = R_2 R_3 ... R_m.
inline SquareMatrix compose_R(const Angles& theta) {
  const int m = angles_dimension(theta);
  SquareMatrix R = SquareMatrix::Identity(m, m);
  for (int i = 2; i <= m; ++i) R = R * givens(i, angle(theta, i), m);
  return R;
}

/// Partial cosine product prod_{n=k}^{l} cos(theta_n); 1 when k > l.
inline double cos_product(const Angles& theta, int k, int l) {
  double acc = 1.0;
  for (int n = k; n <= l; ++n) acc *= std::cos(angle(theta, n));
  return acc;
}

/// Entry-wise closed form of R_theta.
inline SquareMatrix closed_form_R(const Angles& theta) {
  const int m = angles_dimension(theta);
  SquareMatrix R = SquareMatrix::Zero(m, m);
  auto s = [&](int k) { return std::sin(angle(theta, k)); };
  auto c = [&](int k) { return std::cos(angle(theta, k)); };
  R(0, 0) = cos_product(theta, 2, m);
  for (int k = 2; k <= m; ++k) R(k - 1, 0) = s(k) * cos_product(theta, k + 1, m);
  for (int l = 2; l <= m; ++l) {
    R(0, l - 1) = -s(l) * cos_product(theta, 2, l - 1);
    for (int k = 2; k <= m; ++k) {
      if (k < l) {
        R(k - 1, l - 1) = -s(k) * s(l) * cos_product(theta, k + 1, l - 1);
      } else if (k == l) {
        R(k - 1, l - 1) = c(k);
      }
    }
  }
  return R;
}

/// dR_theta/dtheta_j = R_2 ... R_{j-1} (dR_j/dtheta_j) R_{j+1} ... R_m.
inline SquareMatrix dR(const Angles& theta, int j) {
  const int m = angles_dimension(theta);
  check_plane(j, m);
  SquareMatrix out = SquareMatrix::Identity(m, m);
  for (int i = 2; i <= m; ++i) {
    if (i == j) {
      out = out * (givens(j, angle(theta, j) + 0.5 * std::numbers::pi, m) * plane_projection(j, m));
    } else {
      out = out * givens(i, angle(theta, i), m);
    }
  }
  return out;
}

/// A_j = R_theta^{-1} dR_theta/dtheta_j from the factored form
/// R_m^{-1} ... R_{j+1}^{-1} R_j(pi/2) Pi_j R_{j+1} ... R_m.
inline SquareMatrix generator_A(const Angles& theta, int j) {
  const int m = angles_dimension(theta);
  check_plane(j, m);
  SquareMatrix tail = SquareMatrix::Identity(m, m);
  for (int i = j + 1; i <= m; ++i) tail = tail * givens(i, angle(theta, i), m);
  const SquareMatrix core = givens(j, 0.5 * std::numbers::pi, m) * plane_projection(j, m);
  return tail.transpose() * core * tail;
}

/// A_j evaluated directly as R_theta^T dR_theta/dtheta_j.
inline SquareMatrix generator_A_direct(const Angles& theta, int j) {
  return compose_R(theta).transpose() * dR(theta, j);
}

/// (d R_theta^{-1}/dtheta_j) R_theta. Differentiating R^{-1} R = I shows this
/// equals -A_j.
inline SquareMatrix inverse_derivative_form(const Angles& theta, int j) {
  return dR(theta, j).transpose() * compose_R(theta);
}

}  // namespace blowup
