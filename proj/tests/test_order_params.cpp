#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tscl/order_params.hpp"
#include "tscl/task_gen.hpp"
#include "tscl/training.hpp"

using namespace tscl;

namespace {

RowMatrix gaussian_rows(int rows, int d, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, sd);
  RowMatrix w(rows, d);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
  return w;
}

Eigen::VectorXd gaussian_vec(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = n01(rng);
  return v;
}

struct Nets {
  TwoLayerNet student, t1, t2;
};

Nets random_nets(int k, int m, int p, int d, std::uint64_t seed, Activation act = Activation::ErfScaled) {
  return {TwoLayerNet::student(gaussian_rows(k, d, seed), gaussian_vec(k, seed + 1), gaussian_vec(k, seed + 2), act,
                               Scaling::LargeInput),
          TwoLayerNet::teacher(gaussian_rows(m, d, seed + 3), gaussian_vec(m, seed + 4), TaskId::Dagger, act,
                               Scaling::LargeInput),
          TwoLayerNet::teacher(gaussian_rows(p, d, seed + 5), gaussian_vec(p, seed + 6), TaskId::Ddagger, act,
                               Scaling::LargeInput)};
}

OverlapState teacher_copy_state(int k) {
  OverlapState s = OverlapState::zeros(k, k, 1);
  s.Q = s.R = s.T = Eigen::MatrixXd::Identity(k, k);
  s.S = Eigen::MatrixXd::Identity(1, 1);
  s.h_dag = s.v_dag = Eigen::VectorXd::LinSpaced(k, 0.5, 1.5);
  s.h_ddag = Eigen::VectorXd::Zero(k);
  s.v_ddag = Eigen::VectorXd::Ones(1);
  return s;
}

}  // namespace

TEST(AssembleCovariance, UnitDiagonalIsIdentity) {
  OverlapState s = OverlapState::zeros(1, 1, 1);
  s.Q(0, 0) = s.T(0, 0) = s.S(0, 0) = 1.0;
  EXPECT_TRUE(assemble_covariance(s).isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(AssembleCovariance, BlockLayout) {
  OverlapState s = OverlapState::zeros(2, 1, 1);
  s.R << 0.1, 0.2;
  s.U << 0.3, 0.4;
  s.V << 0.7;
  const Eigen::MatrixXd c = assemble_covariance(s);
  ASSERT_EQ(c.rows(), 4);
  EXPECT_EQ(c(0, 2), 0.1);
  EXPECT_EQ(c(1, 2), 0.2);
  EXPECT_EQ(c(0, 3), 0.3);
  EXPECT_EQ(c(1, 3), 0.4);
  EXPECT_EQ(c(2, 3), 0.7);
  EXPECT_EQ(c(3, 2), 0.7);
  EXPECT_EQ(c(3, 1), 0.4);
}

TEST(AssembleCovariance, DimensionMismatchThrows) {
  OverlapState s = OverlapState::zeros(2, 1, 1);
  s.R = Eigen::MatrixXd::Zero(3, 1);
  EXPECT_THROW(assemble_covariance(s), DimensionMismatch);
}

TEST(AssembleCovariance, PsdForRandomNets) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Nets n = random_nets(3, 2, 2, 40, 100 * seed);
    EXPECT_TRUE(is_psd(assemble_covariance(overlaps_from_weights(n.student, n.t1, n.t2)), 1e-9));
  }
}

TEST(Project, SubmatrixInOrder) {
  const ProjectedCovariance p = project(Eigen::MatrixXd::Identity(4, 4), {0, 2});
  EXPECT_EQ(p.dim(), 2);
  EXPECT_EQ(p(1, 1), 1.0);
  EXPECT_EQ(p(1, 2), 0.0);

  Eigen::MatrixXd c(3, 3);
  c << 2, 0.1, 0.2, 0.1, 3, 0.3, 0.2, 0.3, 4;
  const ProjectedCovariance rep = project(c, {1, 1});
  EXPECT_EQ(rep(1, 1), 3.0);
  EXPECT_EQ(rep(1, 2), 3.0);
  const ProjectedCovariance ord = project(c, {2, 0, 1});
  EXPECT_EQ(ord(1, 1), 4.0);
  EXPECT_EQ(ord(1, 2), 0.2);
  EXPECT_EQ(ord(2, 3), 0.1);
  EXPECT_THROW(project(c, {0, 3}), std::out_of_range);
  EXPECT_THROW(project(c, {0}), DimensionMismatch);
}

TEST(GenError, PerfectStudentIsZero) {
  EXPECT_NEAR(gen_error(teacher_copy_state(2), TaskId::Dagger), 0.0, 1e-15);
  EXPECT_NEAR(gen_error(teacher_copy_state(3), TaskId::Dagger, Activation::Linear), 0.0, 1e-15);
}

TEST(GenError, ZeroHeadUnitTeacher) {
  // Only 1/2 E[g(rho)^2] = 1/2 * 1/3 survives.
  for (int k : {1, 2, 5}) {
    OverlapState s = OverlapState::zeros(k, 1, 1);
    s.Q = 0.3 * Eigen::MatrixXd::Identity(k, k);
    s.T(0, 0) = s.S(0, 0) = 1.0;
    s.v_dag << 1.0;
    s.v_ddag << 1.0;
    EXPECT_NEAR(gen_error(s, TaskId::Dagger), 1.0 / 6.0, 1e-14);
  }
}

TEST(GenError, MatchesQuadratureOfDefinition) {
  const Nets n = random_nets(2, 2, 1, 30, 9);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  // eps = 1/2 E[(h.g(lambda) - v.g(rho))^2] over the joint fields.
  Eigen::MatrixXd c = assemble_covariance(s).topLeftCorner(4, 4);
  const Eigen::VectorXd h = s.h_dag, v = s.v_dag;
  const double ref = oracle::gauss_expectation(
      c,
      [&](const Eigen::VectorXd& x) {
        const double d = h[0] * oracle::g(x[0]) + h[1] * oracle::g(x[1]) - v[0] * oracle::g(x[2]) -
                         v[1] * oracle::g(x[3]);
        return 0.5 * d * d;
      },
      28);
  EXPECT_NEAR(gen_error(s, TaskId::Dagger), ref, 1e-7 * std::max(1.0, ref));
}

TEST(GenError, MatchesSimulation) {
  const int d = 10000;
  const Nets n = random_nets(2, 1, 1, d, 77);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  for (TaskId t : {TaskId::Dagger, TaskId::Ddagger}) {
    const TwoLayerNet& teacher = t == TaskId::Dagger ? n.t1 : n.t2;
    const double emp = empirical_gen_error(n.student, teacher, t, 50000, 5);
    const double se = empirical_gen_error_se(n.student, teacher, t, 50000, 5);
    EXPECT_LT(std::abs(gen_error(s, t) - emp), 2.0 * se) << to_string(t);
  }
}

TEST(GenError, LinearActivationExact) {
  const Nets n = random_nets(3, 2, 2, 50, 4, Activation::Linear);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  const Eigen::MatrixXd c = assemble_covariance(s);
  Eigen::VectorXd w(7);
  w << s.h_dag, -s.v_dag, Eigen::VectorXd::Zero(2);
  EXPECT_NEAR(gen_error(s, TaskId::Dagger, Activation::Linear), 0.5 * w.dot(c * w), 1e-12);
  EXPECT_THROW(gen_error(s, TaskId::Dagger, Activation::Relu), std::invalid_argument);
}

TEST(GenError, PermutationInvariance) {
  const Nets n = random_nets(3, 2, 2, 60, 12);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  OverlapState p = s;
  p.Q = perm * s.Q * perm.transpose();
  p.R = perm * s.R;
  p.U = perm * s.U;
  p.h_dag = perm * s.h_dag;
  p.h_ddag = perm * s.h_ddag;
  for (TaskId t : {TaskId::Dagger, TaskId::Ddagger}) EXPECT_NEAR(gen_error(p, t), gen_error(s, t), 1e-13);
}

TEST(GenError, TeacherSignFlipInvariance) {
  const Nets n = random_nets(2, 2, 1, 60, 13);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  OverlapState f = s;
  f.v_dag[1] = -f.v_dag[1];
  f.R.col(1) *= -1.0;
  f.T.row(1) *= -1.0;
  f.T.col(1) *= -1.0;
  f.V.row(1) *= -1.0;
  EXPECT_NEAR(gen_error(f, TaskId::Dagger), gen_error(s, TaskId::Dagger), 1e-13);
}

TEST(GenError, ClampsRoundOff) {
  OverlapState s = teacher_copy_state(1);
  s.h_dag[0] *= 1.0 + 1e-12;
  EXPECT_GE(gen_error(s, TaskId::Dagger), 0.0);
}

TEST(Overlaps, StudentEqualsTeacher) {
  const Nets n = random_nets(1, 1, 1, 200, 3);
  TwoLayerNet student = TwoLayerNet::student(n.t1.features(), n.t1.sole_head(), n.t1.sole_head(),
                                             Activation::ErfScaled, Scaling::LargeInput);
  const OverlapState s = overlaps_from_weights(student, n.t1, n.t2);
  EXPECT_TRUE(s.R.isApprox(s.T));
  EXPECT_TRUE(s.Q.isApprox(s.T));
}

TEST(Overlaps, ConstructedOrthogonalTeachers) {
  SimilaritySpec spec;
  spec.input_dim = 500;
  spec.feature_overlap = 0.0;
  spec.seed = 4;
  const TeacherPair tp = make_teachers_ode_limit(spec);
  const Nets n = random_nets(2, 1, 1, 500, 1);
  const OverlapState s = overlaps_from_weights(n.student, tp.dagger, tp.ddagger);
  EXPECT_NEAR(s.V(0, 0), 0.0, 1e-12);
  const OverlapState r = overlaps_from_weights(n.student, n.t1, n.t2);
  EXPECT_LT(std::abs(r.V(0, 0)), 5.0 / std::sqrt(500.0));
}

TEST(Overlaps, RejectsMismatchAndMeanField) {
  const Nets a = random_nets(2, 1, 1, 20, 1);
  const Nets b = random_nets(2, 1, 1, 21, 1);
  EXPECT_THROW(overlaps_from_weights(a.student, b.t1, a.t2), DimensionMismatch);
  TwoLayerNet mf(a.student.features(), Activation::ErfScaled, Scaling::MeanField);
  mf.set_head(TaskId::Dagger, a.student.head(TaskId::Dagger));
  mf.set_head(TaskId::Ddagger, a.student.head(TaskId::Ddagger));
  EXPECT_THROW(overlaps_from_weights(mf, a.t1, a.t2), std::invalid_argument);
}

TEST(OverlapStateJson, RoundTrip) {
  const Nets n = random_nets(2, 1, 1, 30, 2);
  const OverlapState s = overlaps_from_weights(n.student, n.t1, n.t2);
  nlohmann::json j = s;
  EXPECT_EQ(j["Q"]["rows"], 2);
  const OverlapState back = j.get<OverlapState>();
  EXPECT_EQ(back.Q, s.Q);
  EXPECT_EQ(back.U, s.U);
  EXPECT_EQ(back.h_ddag, s.h_ddag);
}
