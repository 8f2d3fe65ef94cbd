#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tscl/gaussian_integrals.hpp"

using namespace tscl;

namespace {

ProjectedCovariance pc(const Eigen::MatrixXd& m) { return ProjectedCovariance::from_matrix(m); }

Eigen::MatrixXd mat2(double a, double b, double c) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, b, c;
  return m;
}

}  // namespace

TEST(I2, IdentityIsZero) { EXPECT_NEAR(i2(pc(Eigen::MatrixXd::Identity(2, 2))), 0.0, 1e-15); }

TEST(I2, FullyCorrelatedUnitFieldIsOneThird) {
  // g(z) is uniform on [-1, 1] for z ~ N(0, 1), so E[g^2] = 1/3.
  EXPECT_NEAR(i2(pc(mat2(1, 1, 1))), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(oracle::i2(mat2(1, 1, 1)), 1.0 / 3.0, 1e-8);
}

TEST(I2, MatchesQuadrature) {
  const Eigen::MatrixXd c = mat2(0.7, 0.3, 1.2);
  EXPECT_NEAR(i2(pc(c)), oracle::i2(c), 1e-9);
}

TEST(I2, MatchesMonteCarlo) {
  const Eigen::MatrixXd c = mat2(0.7, 0.3, 1.2);
  const McEstimate mc = mc_expectation(pc(c), IntegralKind::I2, 2'000'000, 11);
  EXPECT_LT(std::abs(i2(pc(c)) - mc.estimate), 3.0 * mc.std_error);
}

TEST(I2, SymmetricAndMonotone) {
  EXPECT_DOUBLE_EQ(i2(pc(mat2(0.7, 0.3, 1.2))), i2(pc(mat2(1.2, 0.3, 0.7))));
  double prev = -1.0;
  for (double c12 = -0.9; c12 <= 0.9; c12 += 0.1) {
    const double v = i2(pc(mat2(1.0, c12, 1.0)));
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(I2, ArcsinClampAndDomainError) {
  // |c12| slightly above sqrt(c11 c22) from round-off is clamped, a real violation is not.
  const double bad_by_noise = 1.0 + 1e-12;
  EXPECT_NO_THROW(i2(pc(mat2(1.0, 2.0 * bad_by_noise, 3.0))));
  EXPECT_THROW(i2(pc(mat2(1.0, 5.0, 1.0))), IntegralDomainError);
}

TEST(I3, VanishesWhenBetaIndependent) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 2) = c(2, 0) = 0.4;
  EXPECT_NEAR(i3(pc(c)), 0.0, 1e-15);
}

TEST(I3, MatchesQuadratureAndMonteCarlo) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(1, 2) = c(2, 1) = 0.5;
  EXPECT_NEAR(i3(pc(c)), oracle::i3(c), 1e-9);
  const McEstimate mc = mc_expectation(pc(c), IntegralKind::I3, 2'000'000, 5);
  EXPECT_LT(std::abs(i3(pc(c)) - mc.estimate), 3.0 * mc.std_error);
}

TEST(I3, LinearInSecondField) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd c = oracle::random_covariance(3, rng);
    // beta -> 2 beta doubles column/row 2 (and quadruples c22).
    Eigen::MatrixXd c2 = c;
    c2.row(1) *= 2.0;
    c2.col(1) *= 2.0;
    EXPECT_NEAR(i3(pc(c2)), 2.0 * i3(pc(c)), 1e-12);
    EXPECT_NEAR(i3(pc(c)), oracle::i3(c), 1e-8);
  }
}

TEST(I3, SingularThrows) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c(0, 0) = -1.0;
  EXPECT_THROW(i3(pc(c)), SingularCovariance);
}

TEST(I4, IndependentOutputFieldsGiveZero) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(4, 4);
  c(0, 1) = c(1, 0) = 0.3;
  EXPECT_NEAR(i4(pc(c)), 0.0, 1e-15);
}

TEST(I4, IdentityMatchesOracle) {
  const Eigen::MatrixXd c = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_NEAR(i4(pc(c)), oracle::i4(c), 1e-9);
  const McEstimate mc = mc_expectation(pc(c), IntegralKind::I4, 1'000'000, 9);
  EXPECT_LT(std::abs(i4(pc(c)) - mc.estimate), 3.0 * mc.std_error);
}

TEST(I4, RandomUnitDiagonalMatchesQuadrature) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd c = oracle::random_covariance(4, rng, 1.0, 1.0);
    EXPECT_NEAR(i4(pc(c)), oracle::i4(c), 1e-7);
  }
}

TEST(I4, Symmetries) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd c = oracle::random_covariance(4, rng);
  Eigen::PermutationMatrix<4> swap12, swap34;
  swap12.indices() << 1, 0, 2, 3;
  swap34.indices() << 0, 1, 3, 2;
  const Eigen::MatrixXd a = swap12 * c * swap12.transpose();
  const Eigen::MatrixXd b = swap34 * c * swap34.transpose();
  EXPECT_NEAR(i4(pc(a)), i4(pc(c)), 1e-14);
  EXPECT_NEAR(i4(pc(b)), i4(pc(c)), 1e-14);
}

TEST(Integrals, AgreeWithQuadratureOnRandomCovariances) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd c2 = oracle::random_covariance(2, rng);
    const Eigen::MatrixXd c3 = oracle::random_covariance(3, rng);
    EXPECT_NEAR(i2(pc(c2)), oracle::i2(c2), 1e-8);
    EXPECT_NEAR(i3(pc(c3)), oracle::i3(c3), 1e-8);
  }
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::MatrixXd c4 = oracle::random_covariance(4, rng);
    EXPECT_NEAR(i4(pc(c4)), oracle::i4(c4), 1e-6);
  }
}

TEST(MonteCarlo, KnownValues) {
  const McEstimate one = mc_expectation(pc(mat2(1, 1, 1)), IntegralKind::I2, 1'000'000, 77);
  EXPECT_LT(std::abs(one.estimate - 1.0 / 3.0), 3.0 * one.std_error);
  const McEstimate zero = mc_expectation(pc(Eigen::MatrixXd::Identity(2, 2)), IntegralKind::I2, 1'000'000, 77);
  EXPECT_LT(std::abs(zero.estimate), 3.0 * zero.std_error);
}

TEST(MonteCarlo, SeedsAgreeAndAreDeterministic) {
  const ProjectedCovariance c = pc(Eigen::MatrixXd::Identity(4, 4));
  const McEstimate a = mc_expectation(c, IntegralKind::I4, 200'000, 1);
  const McEstimate b = mc_expectation(c, IntegralKind::I4, 200'000, 2);
  const McEstimate a2 = mc_expectation(c, IntegralKind::I4, 200'000, 1);
  EXPECT_LT(std::abs(a.estimate - b.estimate), 6.0 * std::hypot(a.std_error, b.std_error));
  EXPECT_EQ(a.estimate, a2.estimate);
  EXPECT_EQ(a.std_error, a2.std_error);
}

TEST(MonteCarlo, RejectsBadInput) {
  EXPECT_THROW(mc_expectation(pc(mat2(1, 3, 1)), IntegralKind::I2, 100'000, 1), DecompositionError);
  EXPECT_THROW(mc_expectation(pc(mat2(1, 0, 1)), IntegralKind::I2, 100, 1), std::invalid_argument);
  EXPECT_THROW(mc_expectation(pc(mat2(1, 0, 1)), IntegralKind::I3, 100'000, 1), DimensionMismatch);
}

TEST(ProjectedCovariance, RejectsAsymmetric) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0.2, 0.3, 1;
  EXPECT_THROW(pc(m), IntegralDomainError);
  EXPECT_THROW(ProjectedCovariance(5), DimensionMismatch);
}

TEST(Linear, ClosedForms) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(4, 4);
  c(2, 3) = c(3, 2) = 0.25;
  c(0, 1) = c(1, 0) = 0.5;
  EXPECT_DOUBLE_EQ(linear_i2(pc(c.topLeftCorner(2, 2))), 0.5);
  EXPECT_DOUBLE_EQ(linear_i4(pc(c)), 0.25);
}
