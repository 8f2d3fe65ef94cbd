#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tscl/network.hpp"
#include "tscl/order_params.hpp"
#include "tscl/training.hpp"

using namespace tscl;

namespace {

RowMatrix gaussian_rows(int rows, int d, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n01(0.0, sd);
  RowMatrix w(rows, d);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
  return w;
}

Eigen::VectorXd gaussian_vec(int n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n01(0.0, sd);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = n01(rng);
  return v;
}

double max_rel_error(const Eigen::Ref<const Eigen::MatrixXd>& got, const Eigen::Ref<const Eigen::MatrixXd>& want,
                     double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    const double w = want.data()[i];
    worst = std::max(worst, std::abs(got.data()[i] - w) / std::max(std::abs(w), floor));
  }
  return worst;
}

}  // namespace

TEST(Forward, ZeroHeadGivesZero) {
  std::mt19937_64 rng(1);
  for (Scaling sc : {Scaling::LargeInput, Scaling::MeanField}) {
    TwoLayerNet net = TwoLayerNet::teacher(gaussian_rows(3, 20, rng), Eigen::VectorXd::Zero(3), TaskId::Dagger,
                                           Activation::ErfScaled, sc);
    EXPECT_EQ(forward(net, gaussian_vec(20, rng)), 0.0);
  }
}

TEST(Forward, LinearLargeInputIsMatrixProduct) {
  std::mt19937_64 rng(2);
  const RowMatrix w = gaussian_rows(4, 30, rng);
  const Eigen::VectorXd h = gaussian_vec(4, rng), x = gaussian_vec(30, rng);
  TwoLayerNet net = TwoLayerNet::teacher(w, h, TaskId::Ddagger, Activation::Linear, Scaling::LargeInput);
  EXPECT_NEAR(forward(net, x, TaskId::Ddagger), h.dot(w * x) / std::sqrt(30.0), 1e-12);
}

TEST(Forward, MatchesDefinitionForAllModes) {
  std::mt19937_64 rng(3);
  for (Activation act : {Activation::ErfScaled, Activation::Linear, Activation::Relu}) {
    for (Scaling sc : {Scaling::LargeInput, Scaling::MeanField}) {
      const RowMatrix w = gaussian_rows(5, 12, rng);
      const Eigen::VectorXd h = gaussian_vec(5, rng), x = gaussian_vec(12, rng);
      TwoLayerNet net = TwoLayerNet::teacher(w, h, TaskId::Dagger, act, sc);
      EXPECT_NEAR(forward(net, x), oracle::net_output(w, h, x, act, sc), 1e-13);
    }
  }
}

TEST(Forward, ErfAtZeroInput) {
  std::mt19937_64 rng(4);
  TwoLayerNet net = TwoLayerNet::teacher(gaussian_rows(3, 8, rng), gaussian_vec(3, rng), TaskId::Dagger,
                                         Activation::ErfScaled, Scaling::LargeInput);
  EXPECT_EQ(forward(net, Eigen::VectorXd::Zero(8)), 0.0);
}

TEST(Forward, DimensionMismatch) {
  std::mt19937_64 rng(5);
  TwoLayerNet net = TwoLayerNet::teacher(gaussian_rows(3, 8, rng), gaussian_vec(3, rng), TaskId::Dagger,
                                         Activation::ErfScaled, Scaling::LargeInput);
  EXPECT_THROW(forward(net, Eigen::VectorXd::Zero(7)), DimensionMismatch);
  EXPECT_THROW(net.set_head(TaskId::Ddagger, Eigen::VectorXd::Zero(2)), DimensionMismatch);
  EXPECT_THROW(forward(net, Eigen::VectorXd::Zero(8), TaskId::Ddagger), std::invalid_argument);
}

TEST(SgdStep, NoChangeWhenOutputsAgree) {
  std::mt19937_64 rng(6);
  const RowMatrix w = gaussian_rows(3, 10, rng);
  const Eigen::VectorXd h = gaussian_vec(3, rng), x = gaussian_vec(10, rng);
  TwoLayerNet student = TwoLayerNet::student(w, h, h, Activation::ErfScaled, Scaling::LargeInput);
  const TwoLayerNet teacher = TwoLayerNet::teacher(w, h, TaskId::Dagger, Activation::ErfScaled, Scaling::LargeInput);
  EXPECT_EQ(sgd_step(student, teacher, x, TaskId::Dagger, 1.0, 1.0), 0.0);
  EXPECT_EQ(student.features(), w);
  EXPECT_EQ(student.head(TaskId::Dagger), h);
}

TEST(SgdStep, MatchesFiniteDifferenceGradient) {
  std::mt19937_64 rng(7);
  for (Activation act : {Activation::ErfScaled, Activation::Linear, Activation::Relu}) {
    for (Scaling sc : {Scaling::LargeInput, Scaling::MeanField}) {
      for (int trial = 0; trial < 10; ++trial) {
        const int k = 3, d = 9;
        const RowMatrix w = gaussian_rows(k, d, rng);
        const Eigen::VectorXd h = gaussian_vec(k, rng);
        Eigen::VectorXd x = gaussian_vec(d, rng);
        const double pre_scale = sc == Scaling::LargeInput ? 1.0 / std::sqrt(double(d)) : 1.0;
        // Keep ReLU preactivations clear of the kink.
        while (act == Activation::Relu && ((w * x) * pre_scale).cwiseAbs().minCoeff() < 0.05) x = gaussian_vec(d, rng);
        const double y = gaussian_vec(1, rng)[0];
        const double lr_w = 0.3, lr_h = 0.7;

        TwoLayerNet student = TwoLayerNet::student(w, h, h, act, sc);
        sgd_step(student, y, x, TaskId::Dagger, lr_w, lr_h);
        const oracle::Gradient g = oracle::fd_gradient(w, h, x, y, act, sc);
        const double rw = lr_w, rh = sc == Scaling::LargeInput ? lr_h / d : lr_h;
        const RowMatrix dw = (student.features() - w) / (-rw);
        const Eigen::VectorXd dh = (student.head(TaskId::Dagger) - h) / (-rh);
        const double floor_w = 1e-3 * g.w.cwiseAbs().maxCoeff() + 1e-12;
        const double floor_h = 1e-3 * g.head.cwiseAbs().maxCoeff() + 1e-12;
        EXPECT_LT(max_rel_error(dw, g.w, floor_w), 1e-6) << to_string(act) << " " << to_string(sc);
        EXPECT_LT(max_rel_error(dh, g.head, floor_h), 1e-6) << to_string(act) << " " << to_string(sc);
        EXPECT_EQ(student.head(TaskId::Ddagger), h);
      }
    }
  }
}

TEST(SgdStep, RejectsNonFiniteSample) {
  std::mt19937_64 rng(8);
  TwoLayerNet student = TwoLayerNet::student(gaussian_rows(2, 4, rng), gaussian_vec(2, rng), gaussian_vec(2, rng),
                                             Activation::ErfScaled, Scaling::LargeInput);
  Eigen::VectorXd x = gaussian_vec(4, rng);
  x[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sgd_step(student, 0.0, x, TaskId::Dagger, 1, 1), NonFiniteError);
  EXPECT_THROW(sgd_step(student, std::nan(""), gaussian_vec(4, rng), TaskId::Dagger, 1, 1), NonFiniteError);
}

TEST(SgdStep, InactiveHeadAndTeacherUntouchedOverManySteps) {
  std::mt19937_64 rng(9);
  const int d = 50;
  TwoLayerNet student = TwoLayerNet::student(gaussian_rows(2, d, rng, 0.03), gaussian_vec(2, rng, 0.03),
                                             gaussian_vec(2, rng, 0.03), Activation::ErfScaled, Scaling::LargeInput);
  const TwoLayerNet teacher = TwoLayerNet::teacher(gaussian_rows(1, d, rng), Eigen::VectorXd::Ones(1), TaskId::Dagger,
                                                   Activation::ErfScaled, Scaling::LargeInput);
  const TwoLayerNet teacher_copy = teacher;
  const Eigen::VectorXd frozen = student.head(TaskId::Ddagger);
  for (int s = 0; s < 10000; ++s) sgd_step(student, teacher, gaussian_vec(d, rng), TaskId::Dagger, 1.0, 1.0);
  EXPECT_EQ(student.head(TaskId::Ddagger), frozen);
  EXPECT_EQ(teacher.features(), teacher_copy.features());
  EXPECT_EQ(teacher.sole_head(), teacher_copy.sole_head());
}

TEST(EmpiricalError, StudentEqualsTeacherIsZero) {
  std::mt19937_64 rng(10);
  const RowMatrix w = gaussian_rows(2, 40, rng);
  const Eigen::VectorXd h = gaussian_vec(2, rng);
  const TwoLayerNet t = TwoLayerNet::teacher(w, h, TaskId::Dagger, Activation::ErfScaled, Scaling::LargeInput);
  const TwoLayerNet s = TwoLayerNet::student(w, h, h, Activation::ErfScaled, Scaling::LargeInput);
  EXPECT_EQ(empirical_gen_error(s, t, TaskId::Dagger, 2000, 1), 0.0);
}

TEST(EmpiricalError, ZeroHeadAgainstUnitTeacher) {
  // 1/2 E[g(rho)^2] with rho ~ N(0, 1) is 1/6.
  const int d = 200;
  std::mt19937_64 rng(11);
  RowMatrix w = gaussian_rows(1, d, rng);
  w.row(0) *= std::sqrt(double(d)) / w.row(0).norm();
  const TwoLayerNet t = TwoLayerNet::teacher(w, Eigen::VectorXd::Ones(1), TaskId::Dagger, Activation::ErfScaled,
                                             Scaling::LargeInput);
  const TwoLayerNet s = TwoLayerNet::student(gaussian_rows(2, d, rng), Eigen::VectorXd::Zero(2),
                                             Eigen::VectorXd::Zero(2), Activation::ErfScaled, Scaling::LargeInput);
  const double e = empirical_gen_error(s, t, TaskId::Dagger, 200000, 3);
  const double se = empirical_gen_error_se(s, t, TaskId::Dagger, 200000, 3);
  EXPECT_LT(std::abs(e - 1.0 / 6.0), 3.0 * se);
  EXPECT_THROW(empirical_gen_error(s, t, TaskId::Dagger, 999, 3), std::invalid_argument);
}

TEST(TestSet, FixedInputsGiveSameErrorAsDirectMean) {
  std::mt19937_64 rng(12);
  const int d = 30;
  const TwoLayerNet t = TwoLayerNet::teacher(gaussian_rows(2, d, rng), gaussian_vec(2, rng), TaskId::Ddagger,
                                             Activation::Relu, Scaling::MeanField);
  const TwoLayerNet s = TwoLayerNet::student(gaussian_rows(3, d, rng), gaussian_vec(3, rng), gaussian_vec(3, rng),
                                             Activation::Relu, Scaling::MeanField);
  TestSet set(1500, d, 4);
  set.set_labels(TaskId::Ddagger, t);
  double acc = 0.0;
  for (int n = 0; n < set.size(); ++n) {
    const Eigen::VectorXd x = set.inputs().row(n).transpose();
    const double diff = oracle::net_output(s.features(), s.head(TaskId::Ddagger), x, Activation::Relu,
                                           Scaling::MeanField) -
                        oracle::net_output(t.features(), t.sole_head(), x, Activation::Relu, Scaling::MeanField);
    acc += 0.5 * diff * diff;
  }
  EXPECT_NEAR(set.gen_error(s, TaskId::Ddagger), acc / set.size(), 1e-12);
}

TEST(Scaling, PreactivationVarianceMatchesOverlap) {
  const int d = 2000, n = 20000;
  std::mt19937_64 rng(13);
  TwoLayerNet s = TwoLayerNet::student(gaussian_rows(2, d, rng, 0.7), gaussian_vec(2, rng), gaussian_vec(2, rng),
                                       Activation::ErfScaled, Scaling::LargeInput);
  const TwoLayerNet t = TwoLayerNet::teacher(gaussian_rows(1, d, rng), Eigen::VectorXd::Ones(1), TaskId::Dagger,
                                             Activation::ErfScaled, Scaling::LargeInput);
  const OverlapState ov = overlaps_from_weights(s, t, t);
  TestSet set(n, d, 7);
  const Eigen::MatrixXd pre = (set.inputs() * s.features().transpose()) / std::sqrt(double(d));
  for (int k = 0; k < 2; ++k) {
    const double var = pre.col(k).squaredNorm() / n;
    EXPECT_NEAR(var / ov.Q(k, k), 1.0, 0.05);
  }
}
