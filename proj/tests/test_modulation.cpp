#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blowup/modulation.hpp"

using namespace blowup;

namespace {

SolitonFrame frame(double d, std::initializer_list<double> th) {
  SolitonFrame f;
  f.d = d;
  f.theta = Eigen::VectorXd::Map(th.begin(), static_cast<Eigen::Index>(th.size()));
  return f;
}

}  // namespace

TEST(Frame, AssembleAndRemainderAreInverse) {
  const WeightedGrid g(Params{3.0, 3, 48});
  std::mt19937_64 rng(1);
  const HState q = random_perturbation(rng, 0.1, g);
  const SolitonFrame f = frame(0.3, {0.2, -0.4});
  const HState back = remainder(assemble(f, q, g), f, g);
  EXPECT_LT(h_norm(back - q, g), 1e-14);
  EXPECT_TRUE(f.in_regime());
  EXPECT_FALSE(frame(0.0, {1.1, 0.0}).in_regime());
}

TEST(Modulation, ExactSolitonRecovered) {
  const WeightedGrid g(Params{3.0, 3, 96});
  const SolitonFrame hat = frame(-0.4, {0.3, 0.1});
  const HState v = assemble(hat, HState::zero(96, 3), g);
  const ModulatedState ms = modulate(v, frame(-0.35, {0.35, 0.15}), g);
  EXPECT_NEAR(ms.frame.d, hat.d, 1e-10);
  EXPECT_LT((ms.frame.theta - hat.theta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(h_norm(ms.q, g), 1e-9);
  EXPECT_TRUE(ms.regime_ok);
}

TEST(Modulation, Idempotent) {
  const WeightedGrid g(Params{3.0, 3, 64});
  std::mt19937_64 rng(2);
  const SolitonFrame hat = frame(0.2, {0.1, -0.2});
  const HState v = assemble(hat, random_perturbation(rng, 1e-2, g), g);
  const ModulatedState first = modulate(v, hat, g);
  const ModulatedState second = modulate(assemble(first.frame, first.q, g), first.frame, g);
  EXPECT_NEAR(second.frame.d, first.frame.d, 1e-12);
  EXPECT_LT((second.frame.theta - first.frame.theta).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(second.phi_residual.lpNorm<Eigen::Infinity>(), 1e-11);
}

TEST(Modulation, PlanarRotationEquivariance) {
  const WeightedGrid g(Params{3.0, 2, 64});
  std::mt19937_64 rng(3);
  const SolitonFrame hat = frame(0.1, {0.2});
  const HState v = assemble(hat, random_perturbation(rng, 1e-2, g), g);
  const ModulatedState a = modulate(v, hat, g);
  const double phi = 0.25;
  const ModulatedState b = modulate(rotate(v, givens(2, phi, 2)), frame(0.1, {0.45}), g);
  EXPECT_NEAR(b.frame.d, a.frame.d, 1e-11);
  EXPECT_NEAR(b.frame.theta(0), a.frame.theta(0) + phi, 1e-11);
  EXPECT_LT(h_norm(b.q - a.q, g), 1e-10);
}

TEST(Modulation, ResultIsOrthogonalToNullModes) {
  const WeightedGrid g(Params{3.0, 4, 64});
  std::mt19937_64 rng(4);
  const SolitonFrame hat = frame(0.5, {0.1, 0.0, -0.1});
  const ModulatedState ms = modulate(assemble(hat, random_perturbation(rng, 5e-3, g), g), hat, g);
  const SpectralFrame sf = make_spectral_frame(ms.frame.d, g);
  EXPECT_LT(std::abs(project(sf.bar0, coordinate(ms.q, 0), g)), 1e-10);
  for (int j = 1; j < 4; ++j) EXPECT_LT(std::abs(project(sf.tilde0, coordinate(ms.q, j), g)), 1e-10);
}

TEST(Modulation, ThrowsWhenNewtonCannotStart) {
  const WeightedGrid g(Params{3.0, 2, 32});
  const HState v = assemble(frame(0.0, {0.0}), HState::zero(32, 2), g);
  ModulationOptions opt;
  opt.max_iter = 0;
  EXPECT_THROW(modulate(v, frame(0.3, {0.3}), g, opt), NumericalFailure);
  EXPECT_THROW(modulate(v, frame(0.0, {0.0, 0.0}), g), std::invalid_argument);
}

TEST(Jacobian, LeadingOrderAtExactSoliton) {
  const WeightedGrid g(Params{3.0, 3, 96});
  const SolitonFrame f = frame(0.3, {0.2, -0.3});
  const HState v = assemble(f, HState::zero(96, 3), g);
  const Eigen::MatrixXd J = Phi_jacobian(v, f, g);
  const Eigen::MatrixXd J0 = Phi_jacobian_leading(f, 3.0);
  EXPECT_LT((J.diagonal() - J0.diagonal()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(J0(1, 1), -std::cos(-0.3), 1e-15);
  EXPECT_NEAR(J0(2, 2), -1.0, 1e-15);
  EXPECT_NEAR(J0(0, 0), 2.0 * std::sqrt(2.0) / (2.0 * (1.0 - 0.09)), 1e-15);
}

TEST(Alphas, UnstableModeCoefficient) {
  const WeightedGrid g(Params{3.0, 3, 96});
  const double d = -0.2, eps = 1e-3;
  const SolitonFrame f = frame(d, {0.1, 0.2});
  HState q = HState::zero(96, 3);
  set_coordinate(q, 0, eps * F_bar(d, 1, g));
  ModulatedState ms = modulate(assemble(f, q, g), f, g);
  ms = extract_alphas(ms, g);
  EXPECT_NEAR(ms.alpha_1_1, eps, 1e-10);
  EXPECT_LT(ms.alpha_minus.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Alphas, StableCoordinatesHaveCoerciveSize) {
  const WeightedGrid g(Params{3.0, 3, 96});
  std::mt19937_64 rng(5);
  const HState q = random_remainder_perturbation(rng, 0.0, 1e-2, g);
  ModulatedState ms = modulate(assemble(identity_frame(3), q, g), identity_frame(3), g);
  ms = extract_alphas(ms, g);
  EXPECT_LT(std::abs(ms.alpha_1_1), 1e-9);
  EXPECT_GT(ms.alpha_minus.minCoeff(), 0.0);
  EXPECT_LE(ms.alpha_minus.norm(), 1.0e-2 * (1.0 + 1e-9) * std::sqrt(2.0 * 3.0));
}

TEST(PotentialRemainder, CubicClosedForm) {
  const WeightedGrid g(Params{3.0, 3, 48});
  std::mt19937_64 rng(6);
  const VectorField q1 = random_perturbation(rng, 0.3, g).q1;
  const ScalarField k = kappa_field(0.4, g);
  const ScalarField F = potential_remainder(q1, 0.4, g);
  for (int i = 0; i < 48; ++i) {
    const double qq = q1.row(i).squaredNorm();
    EXPECT_NEAR(F(i), k(i) * q1(i, 0) * qq + 0.25 * qq * qq, 1e-15);
  }
}

TEST(PotentialRemainder, AgainstLongDoubleExpansion) {
  for (double p : {2.0, 5.0}) {
    const WeightedGrid g(Params{p, 2, 32});
    std::mt19937_64 rng(7);
    const VectorField q1 = random_perturbation(rng, 0.05, g).q1;
    const ScalarField k = kappa_field(-0.3, g);
    const ScalarField F = potential_remainder(q1, -0.3, g);
    for (int i = 0; i < 32; ++i) {
      const long double ki = k(i), a = q1(i, 0), b = q1(i, 1), P = p;
      const long double n = std::sqrt((ki + a) * (ki + a) + b * b);
      const long double ref = std::pow(n, P + 1) / (P + 1) - std::pow(ki, P + 1) / (P + 1) - std::pow(ki, P) * a -
                              0.5L * P * std::pow(ki, P - 1) * a * a - 0.5L * std::pow(ki, P - 1) * b * b;
      EXPECT_NEAR(F(i), static_cast<double>(ref), 1e-11 * std::abs(static_cast<double>(ref)) + 1e-16)
          << "p=" << p << " i=" << i;
    }
  }
}

TEST(PotentialRemainder, CubicScaling) {
  const WeightedGrid g(Params{3.0, 3, 48});
  std::mt19937_64 rng(8);
  const VectorField q1 = random_perturbation(rng, 1.0, g).q1;
  const double r1 = R_minus(1e-3 * q1, 0.0, g);
  const double r2 = R_minus(2e-3 * q1, 0.0, g);
  EXPECT_NEAR(r2 / r1, 8.0, 1e-2);
}

TEST(EnergyExpansion, QuadraticFormsPlusRemainder) {
  const WeightedGrid g(Params{3.0, 3, 128});
  std::mt19937_64 rng(9);
  const double d = 0.25;
  const HState q = random_perturbation(rng, 0.05, g);
  const SolitonFrame f = frame(d, {0.0, 0.0});
  double quad = form_bar(d, coordinate(q, 0), coordinate(q, 0), g);
  for (int j = 1; j < 3; ++j) quad += form_tilde(d, coordinate(q, j), coordinate(q, j), g);
  const double lhs = energy(assemble(f, q, g), g) - soliton_energy(3.0);
  EXPECT_NEAR(lhs, 0.5 * quad + R_minus(q.q1, d, g), 1e-9);
}

TEST(Monitors, SyntheticSeriesHasUnitDrift) {
  MonitorSeries series;
  for (int k = 0; k <= 100; ++k) {
    MonitorRecord r;
    r.s = 0.1 * k;
    r.q_norm = 1e-2 * std::exp(-r.s);
    // theta' = q^2, lambda' = -q^2, alpha' - alpha = q^2
    const double I = 1e-4 * (1.0 - std::exp(-2.0 * r.s)) / 2.0;
    r.theta = Eigen::VectorXd::Constant(1, I);
    r.lambda = -I;
    r.alpha_1_1 = 0.0;
    r.alpha_minus = Eigen::VectorXd::Constant(2, 0.5 * r.q_norm);
    r.R_minus = 0.3 * std::pow(r.q_norm, 3.0);
    r.a = 0.0;
    r.b = r.alpha_minus.squaredNorm() + r.R_minus;
    series.push_back(r);
  }
  const DynamicsDiagnostics dd = monitor_dynamics(series, 3.0, 1e-4);
  EXPECT_GT(dd.gated_samples, 10u);
  EXPECT_NEAR(dd.theta_drift, 1.0, 0.02);
  EXPECT_NEAR(dd.lambda_drift, 1.0, 0.02);
  EXPECT_NEAR(dd.R_drift, 1.0, 1e-12);
  EXPECT_NEAR(dd.max_R_ratio, 0.3, 1e-12);
  EXPECT_TRUE(dd.sandwich_all);
  series[50].b = 2.0 * series[50].alpha_minus.squaredNorm();
  EXPECT_FALSE(monitor_dynamics(series, 3.0).sandwich_all);
}

TEST(Perturbations, NormsAndModeFreedom) {
  const WeightedGrid g(Params{3.0, 3, 64});
  std::mt19937_64 rng(10);
  const HState q = random_remainder_perturbation(rng, 0.2, 3e-3, g);
  EXPECT_NEAR(h_norm(q, g), 3e-3, 1e-15);
  const SpectralFrame sf = make_spectral_frame(0.2, g);
  EXPECT_LT(std::abs(project(sf.bar1, coordinate(q, 0), g)), 1e-12);
  EXPECT_LT(std::abs(project(sf.bar0, coordinate(q, 0), g)), 1e-12);
  std::mt19937_64 a(11), b(11);
  EXPECT_EQ(random_perturbation(a, 1e-2, g).q1, random_perturbation(b, 1e-2, g).q1);
}

TEST(Perturbations, SmoothPairIndependentOfResolution) {
  const WeightedGrid coarse(Params{3.0, 2, 32}), fine(Params{3.0, 2, 64});
  std::mt19937_64 a(12), b(12);
  const ScalarPair pc = random_smooth_pair(a, coarse);
  const ScalarPair pf = random_smooth_pair(b, fine);
  // Same polynomial: the weighted integral agrees.
  EXPECT_NEAR(integrate_rho(pc.first, coarse), integrate_rho(pf.first, fine), 1e-13);
}
