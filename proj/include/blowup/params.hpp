#pragma once

#include <stdexcept>
#include <string>

namespace blowup {

/// Problem parameters: nonlinearity power p, target dimension m, and the
/// number of interior collocation nodes n.
struct Params {
  double p = 3.0;
  int m = 3;
  int n = 128;

  void validate() const {
    if (!(p > 1.0)) throw std::invalid_argument("Params: p must be > 1, got " + std::to_string(p));
    if (m < 2) throw std::invalid_argument("Params: m must be >= 2, got " + std::to_string(m));
    if (n < 16) throw std::invalid_argument("Params: n must be >= 16, got " + std::to_string(n));
  }
};

/// Raised when a numerical procedure fails to meet its own accuracy contract
/// (quadrature validation, linear solve, Newton, integrator).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exponent 2/(p-1) of the weight rho.
inline double weight_exponent(double p) { return 2.0 / (p - 1.0); }

/// 2(p+1)/(p-1)^2, the linear coefficient of the self-similar equation.
inline double linear_coefficient(double p) { return 2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0)); }

/// (p+3)/(p-1), the damping coefficient of the self-similar equation.
inline double damping_coefficient(double p) { return (p + 3.0) / (p - 1.0); }

}  // namespace blowup
