#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "tscl/errors.hpp"
#include "tscl/network.hpp"
#include "tscl/order_params.hpp"
#include "tscl/rng.hpp"

namespace tscl {

struct TrainingSchedule {
  long long switch_step = 25000;
  long long total_steps = 1000000;
  double lr_w = 1.0;
  double lr_h = 1.0;
  int test_set_size = 10000;
  long long log_every = 1000;
  std::uint64_t seed = 0;
  double student_init_std = std::sqrt(0.001);
  int dense_after_switch = 20;               // every step in [s~, s~ + n] is logged
  std::vector<long long> extra_log_steps;
  std::vector<long long> snapshot_steps;     // W is copied at these steps
  bool record_overlaps = false;              // large-input only

  void validate() const {
    if (!(switch_step > 0 && switch_step < total_steps))
      throw std::invalid_argument("TrainingSchedule: need 0 < switch_step < total_steps");
    if (log_every <= 0) throw std::invalid_argument("TrainingSchedule: log_every must be positive");
    if (test_set_size < 1000) throw std::invalid_argument("TrainingSchedule: test_set_size must be >= 1000");
    if (dense_after_switch < 0) throw std::invalid_argument("TrainingSchedule: dense_after_switch must be >= 0");
  }
};

struct ErrorTrace {
  std::vector<long long> steps;
  std::vector<double> eps_dag;
  std::vector<double> eps_ddag;
  std::vector<OverlapState> overlaps;
  std::map<long long, RowMatrix> snapshots;
};

/// Steps at which errors are recorded: 0, every log_every, s~ - 1, s~,
/// s~ + 1 .. s~ + n, the end, and any extras within range.
inline std::vector<long long> log_steps(const TrainingSchedule& sched) {
  std::vector<long long> s{0, sched.switch_step - 1, sched.switch_step, sched.total_steps};
  for (long long k = sched.log_every; k < sched.total_steps; k += sched.log_every) s.push_back(k);
  for (long long i = 1; i <= sched.dense_after_switch; ++i) s.push_back(sched.switch_step + i);
  for (long long k : sched.extra_log_steps) s.push_back(k);
  for (long long k : sched.snapshot_steps) s.push_back(k);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  s.erase(std::remove_if(s.begin(), s.end(), [&](long long k) { return k < 0 || k > sched.total_steps; }),
          s.end());
  return s;
}

inline Eigen::VectorXd draw_student_head(int k, double init_std, std::uint64_t seed, TaskId task) {
  NormalSampler normal(make_engine(seed, task == TaskId::Dagger ? Stream::StudentHeadDagger
                                                                 : Stream::StudentHeadDdagger));
  Eigen::VectorXd h(k);
  normal.fill(h, init_std);
  return h;
}

/// Student with N(0, init_std^2) features and heads, each from its own stream.
inline TwoLayerNet make_student(int k, int input_dim, Activation act, Scaling scaling, double init_std,
                                std::uint64_t seed) {
  NormalSampler normal(make_engine(seed, Stream::StudentFeatures));
  RowMatrix w(k, input_dim);
  normal.fill(w, init_std);
  return TwoLayerNet::student(std::move(w), draw_student_head(k, init_std, seed, TaskId::Dagger),
                              draw_student_head(k, init_std, seed, TaskId::Ddagger), act, scaling);
}

/// Called after every logged step with (step, student).
using TrainObserver = std::function<void(long long, const TwoLayerNet&)>;

/// Two-phase online SGD: steps [0, s~) on the first teacher, [s~, end) on
/// the second. At the switch the second head is redrawn from its stream,
/// which reproduces the head make_student() drew for the same seed.
inline ErrorTrace train(TwoLayerNet& student, const TwoLayerNet& t1, const TwoLayerNet& t2,
                        const TrainingSchedule& sched, const TrainObserver& observer = {}) {
  sched.validate();
  const int d = student.input_dim();
  if (t1.input_dim() != d || t2.input_dim() != d) throw DimensionMismatch("train: input dims differ");
  if (!student.has_head(TaskId::Dagger) || !student.has_head(TaskId::Ddagger))
    throw std::invalid_argument("train: student needs both heads");
  if (sched.record_overlaps && student.scaling() != Scaling::LargeInput)
    throw std::invalid_argument("train: overlaps are only defined for large-input scaling");

  TestSet test(sched.test_set_size, d, sched.seed);
  test.set_labels(TaskId::Dagger, t1);
  test.set_labels(TaskId::Ddagger, t2);

  const std::vector<long long> grid = log_steps(sched);
  ErrorTrace trace;
  auto record = [&](long long step) {
    const double e1 = test.gen_error(student, TaskId::Dagger);
    const double e2 = test.gen_error(student, TaskId::Ddagger);
    if (!std::isfinite(e1) || !std::isfinite(e2))
      throw NonFiniteError("train: non-finite test error at step " + std::to_string(step));
    trace.steps.push_back(step);
    trace.eps_dag.push_back(e1);
    trace.eps_ddag.push_back(e2);
    if (sched.record_overlaps) trace.overlaps.push_back(overlaps_from_weights(student, t1, t2));
    if (std::find(sched.snapshot_steps.begin(), sched.snapshot_steps.end(), step) != sched.snapshot_steps.end())
      trace.snapshots.emplace(step, student.features());
    if (observer) observer(step, student);
  };

  NormalSampler normal(make_engine(sched.seed, Stream::TrainSamples));
  Eigen::VectorXd x(d);
  std::size_t next = 0;
  for (long long step = 0;; ++step) {
    if (step == sched.switch_step)
      student.set_head(TaskId::Ddagger, draw_student_head(student.hidden(), sched.student_init_std, sched.seed,
                                                          TaskId::Ddagger));
    if (next < grid.size() && grid[next] == step) {
      record(step);
      ++next;
    }
    if (step == sched.total_steps) break;
    normal.fill(x);
    const bool phase1 = step < sched.switch_step;
    const double delta = sgd_step(student, phase1 ? t1 : t2, x, phase1 ? TaskId::Dagger : TaskId::Ddagger,
                                  sched.lr_w, sched.lr_h);
    if (!std::isfinite(delta)) throw NonFiniteError("train: non-finite loss at step " + std::to_string(step));
  }
  return trace;
}

/// mean((W_now - W_ref)^2) / mean(W_ref^2).
inline double feature_mse(const RowMatrix& w_now, const RowMatrix& w_ref) {
  if (w_now.rows() != w_ref.rows() || w_now.cols() != w_ref.cols())
    throw DimensionMismatch("feature_mse: shapes differ");
  const double norm = w_ref.squaredNorm();
  if (norm == 0.0) throw std::domain_error("feature_mse: reference weights are zero");
  return (w_now - w_ref).squaredNorm() / norm;
}

}  // namespace tscl
