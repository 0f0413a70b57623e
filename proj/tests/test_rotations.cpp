#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blowup/rotations.hpp"

using namespace blowup;

namespace {

Angles random_angles(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(-M_PI / 3.0, M_PI / 3.0);
  Angles th(m - 1);
  for (int k = 0; k < m - 1; ++k) th(k) = u(rng);
  return th;
}

}  // namespace

TEST(Givens, GroupLawAndInverse) {
  for (int m = 2; m <= 5; ++m) {
    for (int i = 2; i <= m; ++i) {
      const SquareMatrix prod = givens(i, 0.3, m) * givens(i, -1.1, m);
      EXPECT_LT((prod - givens(i, -0.8, m)).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_LT((givens(i, 0.7, m).transpose() - givens(i, -0.7, m)).cwiseAbs().maxCoeff(), 0.0 + 1e-16);
    }
  }
  EXPECT_THROW(givens(1, 0.1, 3), std::out_of_range);
  EXPECT_THROW(givens(4, 0.1, 3), std::out_of_range);
}

TEST(ComposeR, PlanarCaseIsOneGivens) {
  Angles th(1);
  th << 0.4;
  const SquareMatrix R = compose_R(th);
  EXPECT_NEAR(R(0, 0), std::cos(0.4), 1e-16);
  EXPECT_NEAR(R(1, 0), std::sin(0.4), 1e-16);
  EXPECT_NEAR(R(0, 1), -std::sin(0.4), 1e-16);
}

TEST(ComposeR, OrthogonalWithUnitDeterminant) {
  std::mt19937_64 rng(7);
  for (int m = 2; m <= 6; ++m) {
    for (int t = 0; t < 50; ++t) {
      const SquareMatrix R = compose_R(random_angles(rng, m));
      EXPECT_LT((R.transpose() * R - SquareMatrix::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_NEAR(R.determinant(), 1.0, 1e-14);
    }
  }
}

TEST(ComposeR, FirstColumnIsSphericalCoordinates) {
  // R e1 = (prod_{2..m} cos, sin th_2 prod_{3..m} cos, ..., sin th_m).
  std::mt19937_64 rng(8);
  const Angles th = random_angles(rng, 4);
  const Eigen::VectorXd c = compose_R(th).col(0);
  EXPECT_NEAR(c(3), std::sin(th(2)), 1e-15);
  EXPECT_NEAR(c(2), std::sin(th(1)) * std::cos(th(2)), 1e-15);
  EXPECT_NEAR(c(0), std::cos(th(0)) * std::cos(th(1)) * std::cos(th(2)), 1e-15);
}

TEST(ClosedForm, MatchesProduct) {
  std::mt19937_64 rng(9);
  for (int m = 2; m <= 6; ++m) {
    for (int t = 0; t < 100; ++t) {
      const Angles th = random_angles(rng, m);
      EXPECT_LT((closed_form_R(th) - compose_R(th)).cwiseAbs().maxCoeff(), 1e-13);
    }
  }
}

TEST(Derivative, MatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const double h = 1e-6;
  for (int m = 2; m <= 5; ++m) {
    const Angles th = random_angles(rng, m);
    for (int j = 2; j <= m; ++j) {
      Angles tp = th, tm = th;
      tp(j - 2) += h;
      tm(j - 2) -= h;
      const SquareMatrix fd = (compose_R(tp) - compose_R(tm)) / (2 * h);
      EXPECT_LT((dR(th, j) - fd).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Generators, AntisymmetricAndConsistent) {
  std::mt19937_64 rng(11);
  for (int m = 2; m <= 6; ++m) {
    const Angles th = random_angles(rng, m);
    for (int j = 2; j <= m; ++j) {
      const SquareMatrix A = generator_A(th, j);
      EXPECT_LT((A + A.transpose()).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_LT((A - generator_A_direct(th, j)).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_LT((inverse_derivative_form(th, j) + A).cwiseAbs().maxCoeff(), 1e-14);
      // <e1, A e1> = 0, <e_j, A e1> = prod_{k>j} cos th_k
      EXPECT_NEAR(A(0, 0), 0.0, 1e-15);
      EXPECT_NEAR(A(j - 1, 0), cos_product(th, j + 1, m), 1e-14);
      EXPECT_LE(A.jacobiSvd().singularValues()(0), 1.0 + 1e-12);
    }
  }
}

TEST(CosProduct, EmptyRangeIsOne) {
  Angles th(3);
  th << 0.1, 0.2, 0.3;
  EXPECT_EQ(cos_product(th, 5, 4), 1.0);
  EXPECT_NEAR(cos_product(th, 2, 4), std::cos(0.1) * std::cos(0.2) * std::cos(0.3), 1e-16);
}
