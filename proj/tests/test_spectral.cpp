#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blowup/modulation.hpp"
#include "blowup/spectral.hpp"

using namespace blowup;

namespace {

ScalarPair smooth_pair(const WeightedGrid& g, double a, double b) {
  return {g.sample([=](double y) { return std::cos(a * y) + b * y; }),
          g.sample([=](double y) { return std::sin(b * y + a); })};
}

}  // namespace

TEST(Eigenmodes, ResidualsSmallAcrossBoosts) {
  for (double p : {2.0, 3.0}) {
    const WeightedGrid g(Params{p, 2, 128});
    for (double d : {-0.9, -0.3, 0.0, 0.6, 0.9}) {
      const ScalarPair F1 = F_bar(d, 1, g);
      const ScalarPair F0 = F_bar(d, 0, g);
      const ScalarPair Ft = F_tilde(d, g);
      EXPECT_LT(h_norm_pair(apply_Lbar(d, F1, g) - F1, g), 1e-7) << "p=" << p << " d=" << d;
      EXPECT_LT(h_norm_pair(apply_Lbar(d, F0, g), g), 1e-7) << "p=" << p << " d=" << d;
      EXPECT_LT(h_norm_pair(apply_Ltilde(d, Ft, g), g), 1e-7) << "p=" << p << " d=" << d;
    }
  }
}

TEST(Eigenmodes, BarNullModeIsBoostDerivative) {
  const WeightedGrid g(Params{3.0, 2, 64});
  const double d = 0.4;
  const ScalarField dk = d_kappa_field(d, g);
  const ScalarField F0 = F_bar(d, 0, g).first;
  const double c = F0.dot(dk) / dk.squaredNorm();
  EXPECT_LT((F0 - c * dk).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Potentials, DifferByScaledPower) {
  for (double p : {2.0, 3.0, 5.0}) {
    for (double y : {-0.5, 0.2}) {
      EXPECT_NEAR(psi_bar(0.3, y, p) - psi_tilde(0.3, y, p), (p - 1.0) * std::pow(kappa(0.3, y, p), p - 1.0), 1e-12);
    }
  }
}

TEST(DualModes, Biorthogonality) {
  for (double p : {2.0, 3.0, 5.0}) {
    const WeightedGrid g(Params{p, 2, 128});
    for (double d : {-0.9, 0.0, 0.5}) {
      const SpectralFrame sf = make_spectral_frame(d, g);
      EXPECT_NEAR(project(sf.bar0, sf.bar0.F, g), 1.0, 1e-12);
      EXPECT_NEAR(project(sf.bar1, sf.bar1.F, g), 1.0, 1e-12);
      EXPECT_NEAR(project(sf.tilde0, sf.tilde0.F, g), 1.0, 1e-12);
      EXPECT_NEAR(project(sf.bar0, sf.bar1.F, g), 0.0, 1e-8) << "p=" << p << " d=" << d;
      EXPECT_NEAR(project(sf.bar1, sf.bar0.F, g), 0.0, 1e-8) << "p=" << p << " d=" << d;
    }
  }
}

TEST(DualModes, AnnihilateRangeOfShiftedOperator) {
  // phi(W_lambda, (L - lambda) q) = 0 for every q.
  const WeightedGrid g(Params{3.0, 2, 128});
  for (double d : {-0.5, 0.0, 0.7}) {
    const SpectralFrame sf = make_spectral_frame(d, g);
    for (double a : {0.5, 2.0}) {
      const ScalarPair q = smooth_pair(g, a, 1.0 - a);
      const double n = h_norm_pair(q, g);
      EXPECT_NEAR(project(sf.bar1, apply_Lbar(d, q, g) - q, g) / n, 0.0, 1e-8);
      EXPECT_NEAR(project(sf.bar0, apply_Lbar(d, q, g), g) / n, 0.0, 1e-8);
      EXPECT_NEAR(project(sf.tilde0, apply_Ltilde(d, q, g), g) / n, 0.0, 1e-8);
    }
  }
}

TEST(DualModes, NormalizationScalesWithBoost) {
  // c_norm / c_closed = (1-d^2)^{1/(p-1)} for the bar modes; the tilde mode
  // constant does not depend on d.
  for (double p : {2.0, 3.0}) {
    const WeightedGrid g(Params{p, 2, 128});
    for (double d : {0.0, -0.4, 0.8}) {
      const SpectralFrame sf = make_spectral_frame(d, g);
      const double ref = std::pow(1.0 - d * d, 1.0 / (p - 1.0));
      EXPECT_NEAR(sf.bar1.c_norm / sf.bar1.c_closed, ref, 1e-8) << "p=" << p << " d=" << d;
      EXPECT_NEAR(sf.bar0.c_norm / sf.bar0.c_closed, ref, 1e-8) << "p=" << p << " d=" << d;
      EXPECT_NEAR(sf.tilde0.c_norm / sf.tilde0.c_closed, 1.0, 1e-8) << "p=" << p << " d=" << d;
    }
  }
}

TEST(Adjoint, PhiAdjointness) {
  const WeightedGrid g(Params{3.0, 2, 128});
  const double d = 0.3;
  const ScalarPair q = smooth_pair(g, 0.8, 0.4);
  ScalarPair r = smooth_pair(g, 1.3, -0.6);
  r.second = r.second.cwiseProduct((1.0 - g.nodes().array().square()).matrix());
  const double lhs = phi_pair(apply_Lbar(d, q, g), r, g);
  const double rhs = phi_pair(q, apply_Lbar_adjoint(d, r, g), g);
  EXPECT_NEAR(lhs, rhs, 1e-8 * (std::abs(lhs) + 1.0));
  const double lt = phi_pair(apply_Ltilde(d, q, g), r, g);
  const double rt = phi_pair(q, apply_Ltilde_adjoint(d, r, g), g);
  EXPECT_NEAR(lt, rt, 1e-8 * (std::abs(lt) + 1.0));
}

TEST(Decomposition, RemainderHasNoModeComponents) {
  const WeightedGrid g(Params{3.0, 2, 96});
  const SpectralFrame sf = make_spectral_frame(-0.2, g);
  const ScalarPair r = smooth_pair(g, 1.7, 0.9);
  const BarDecomposition bd = decompose_bar(sf, r, g);
  EXPECT_NEAR(project(sf.bar0, bd.remainder, g), 0.0, 1e-10);
  EXPECT_NEAR(project(sf.bar1, bd.remainder, g), 0.0, 1e-10);
  const TildeDecomposition td = decompose_tilde(sf, r, g);
  EXPECT_NEAR(project(sf.tilde0, td.remainder, g), 0.0, 1e-12);
  // Decomposing a mode returns its coefficient exactly.
  const BarDecomposition pure = decompose_bar(sf, 2.5 * sf.bar1.F, g);
  EXPECT_NEAR(pure.alpha1, 2.5, 1e-8);
  EXPECT_NEAR(pure.alpha0, 0.0, 1e-8);
}

TEST(Coercivity, FormsPositiveOnRemainders) {
  const WeightedGrid g(Params{3.0, 3, 96});
  std::mt19937_64 rng(12);
  for (double d : {-0.6, 0.0, 0.6}) {
    const SpectralFrame sf = make_spectral_frame(d, g);
    for (int k = 0; k < 20; ++k) {
      const ScalarPair rb = decompose_bar(sf, random_smooth_pair(rng, g), g).remainder;
      const ScalarPair rt = decompose_tilde(sf, random_smooth_pair(rng, g), g).remainder;
      EXPECT_GT(form_bar(d, rb, rb, g), 0.0);
      EXPECT_GT(form_tilde(d, rt, rt, g), 0.0);
    }
  }
}

TEST(Coercivity, FormsNegativeOrZeroOnModes) {
  const WeightedGrid g(Params{3.0, 2, 96});
  const double d = 0.2;
  const ScalarPair F1 = F_bar(d, 1, g);
  EXPECT_LT(form_bar(d, F1, F1, g), 0.0);
  const ScalarPair Ft = F_tilde(d, g);
  EXPECT_NEAR(form_tilde(d, Ft, Ft, g), 0.0, 1e-9);
}

TEST(Eigenmodes, RejectUnsupportedEigenvalue) {
  const WeightedGrid g(Params{3.0, 2, 32});
  EXPECT_THROW(F_bar(0.0, 2, g), std::invalid_argument);
  EXPECT_THROW(F_bar(1.0, 1, g), std::domain_error);
}
