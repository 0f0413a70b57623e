#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blowup/solitons.hpp"

using namespace blowup;

TEST(Kappa, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(kappa0(2.0), 6.0);
  EXPECT_NEAR(kappa0(3.0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(kappa0(5.0), std::pow(0.75, 0.25), 1e-15);
  EXPECT_NEAR(kappa(0.5, 0.0, 3.0), std::sqrt(2.0) * std::sqrt(0.75), 1e-15);
  EXPECT_NEAR(kappa(0.0, 0.7, 3.0), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(kappa(1.0, 0.0, 3.0), std::domain_error);
}

TEST(Kappa, DerivativesAgainstFiniteDifferences) {
  const double h = 1e-6;
  for (double p : {2.0, 3.0, 5.0}) {
    for (double d : {-0.6, 0.0, 0.4}) {
      for (double y : {-0.8, 0.1, 0.9}) {
        const double fd_d = (kappa(d + h, y, p) - kappa(d - h, y, p)) / (2 * h);
        const double fd_y = (kappa(d, y + h, p) - kappa(d, y - h, p)) / (2 * h);
        EXPECT_NEAR(d_kappa(d, y, p), fd_d, 1e-7 * (1.0 + std::abs(fd_d)));
        EXPECT_NEAR(d_kappa_dy(d, y, p), fd_y, 1e-7 * (1.0 + std::abs(fd_y)));
      }
    }
  }
}

TEST(Energy, SolitonEnergyClosedForm) {
  EXPECT_NEAR(soliton_energy(3.0), 4.0 / 3.0, 1e-15);
  const WeightedGrid g(Params{3.0, 3, 128});
  const HState k0 = soliton_state({0.0, unit_vector(3, 0)}, g);
  EXPECT_NEAR(energy(k0, g), 4.0 / 3.0, 1e-12);
}

TEST(Energy, IndependentOfBoostAndDirection) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  for (double p : {2.0, 3.0, 5.0}) {
    const WeightedGrid g(Params{p, 3, 128});
    for (double d : {-0.6, 0.3, 0.9}) {
      Eigen::VectorXd om(3);
      for (int k = 0; k < 3; ++k) om(k) = nd(rng);
      om.normalize();
      const double E = energy(soliton_state({d, om}, g), g);
      EXPECT_NEAR(E, soliton_energy(p), 1e-6 * soliton_energy(p)) << "p=" << p << " d=" << d;
    }
  }
}

TEST(Stationarity, ResidualSmall) {
  for (double p : {2.0, 3.0, 5.0}) {
    const WeightedGrid g(Params{p, 2, 128});
    for (double d : {-0.9, 0.0, 0.6}) {
      const VectorField w = soliton_field({d, unit_vector(2, 1)}, g);
      EXPECT_LT(stationary_residual(w, g).cwiseAbs().maxCoeff(), 1e-8) << "p=" << p << " d=" << d;
    }
  }
}

TEST(Stationarity, NonSolutionHasLargeResidual) {
  const WeightedGrid g(Params{3.0, 2, 64});
  const VectorField w = 1.1 * soliton_field({0.2, unit_vector(2, 0)}, g);
  EXPECT_GT(stationary_residual(w, g).cwiseAbs().maxCoeff(), 0.1);
}

TEST(SolitonParams, RejectsNonUnitDirection) {
  const WeightedGrid g(Params{3.0, 2, 32});
  EXPECT_THROW(soliton_field({0.0, Eigen::Vector2d(1.0, 1.0)}, g), std::domain_error);
  EXPECT_THROW(soliton_field({-1.0, unit_vector(2, 0)}, g), std::domain_error);
}

TEST(XiTransform, BoostBecomesTranslation) {
  for (double p : {2.0, 3.0}) {
    const WeightedGrid g(Params{p, 2, 64});
    const double d = 0.45;
    const XiProfile prof = xi_transform(soliton_field({d, unit_vector(2, 0)}, g), g);
    for (Eigen::Index i = 0; i < prof.xi.size(); ++i) {
      EXPECT_NEAR(prof.values(i, 0), kbar(prof.xi(i) + std::atanh(d), p), 1e-12);
      EXPECT_EQ(prof.values(i, 1), 0.0);
    }
  }
}

TEST(XiTransform, RoundTrip) {
  const WeightedGrid g(Params{3.0, 3, 48});
  VectorField w(48, 3);
  for (int j = 0; j < 3; ++j) w.col(j) = g.sample([j](double y) { return std::cos((j + 1) * y) + y; });
  const VectorField back = xi_inverse(xi_transform(w, g), g.p());
  EXPECT_LT((back - w).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ProfileOde, ZeroAngularMomentumFollowsKbar) {
  const double p = 3.0;
  const double c = 0.4;
  const OdeTrajectory tr = classify_ode_integrate({kbar(c, p), kbar_deriv(c, p), 0.0, 0.0}, 8.0, p);
  ASSERT_FALSE(tr.samples.empty());
  for (const auto& s : tr.samples) EXPECT_NEAR(s.state.rho_val, kbar(s.xi + c, p), 1e-7);
  EXPECT_LT(tr.max_first_integral_drift, 1e-8);
}

TEST(ProfileOde, PositiveAngularMomentumStaysAwayFromZero) {
  const double p = 3.0;
  for (double mu : {0.1, 1.0}) {
    const double r0 = kappa0(p);
    const OdeTrajectory tr = classify_ode_integrate({r0, 0.0, mu / std::pow(r0, 4), mu}, 30.0, p);
    EXPECT_GT(tr.min_rho, 0.01) << "mu=" << mu;
  }
  EXPECT_THROW(classify_ode_integrate({0.0, 0.0, 0.0, 0.0}, 1.0, p), std::invalid_argument);
  EXPECT_THROW(classify_ode_integrate({1.0, 0.0, 0.0, -1.0}, 1.0, p), std::invalid_argument);
}

TEST(ProfileOde, VectorAngularInvariantConserved) {
  const double p = 3.0;
  Eigen::Vector3d w0(0.8, 0.3, 0.0), dw0(0.0, 0.2, 0.5);
  const auto samples = integrate_vector_profile(w0, dw0, 5.0, p);
  ASSERT_GT(samples.size(), 10u);
  const double mu0 = angular_invariant(w0, dw0);
  // |w x w'|^2 is conserved for a central force.
  for (const auto& s : samples) EXPECT_NEAR(angular_invariant(s.value, s.deriv), mu0, 1e-8);
}

TEST(ManifoldDistance, ZeroOnTheFamily) {
  const WeightedGrid g(Params{3.0, 3, 64});
  const Eigen::Vector3d om = Eigen::Vector3d(1.0, -2.0, 0.5).normalized();
  const ManifoldDistance md = project_to_manifold_distance(soliton_state({0.35, om}, g), g);
  EXPECT_LT(md.distance, 1e-6);
  EXPECT_NEAR(md.best.d, 0.35, 1e-6);
  EXPECT_LT((md.best.omega - om).norm(), 1e-6);
}

TEST(ManifoldDistance, BoundedByPerturbationSize) {
  const WeightedGrid g(Params{3.0, 2, 64});
  HState q = soliton_state({-0.2, unit_vector(2, 0)}, g);
  HState pert = HState::zero(64, 2);
  pert.q1.col(1) = g.sample([](double y) { return 1e-3 * (1.0 + y * y); });
  const double size = h1_unweighted_norm(pert.q1, g);
  q += pert;
  const ManifoldDistance md = project_to_manifold_distance(q, g);
  EXPECT_LE(md.distance, size * (1.0 + 1e-9));
  EXPECT_GT(md.distance, 0.0);
}
