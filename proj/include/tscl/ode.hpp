#pragma once

// Order-parameter ODEs for a multi-head student trained online on one
// teacher at a time. With Delta = sum_k h_k g(lambda_k) - sum_a v_a g(phi_a)
// over the active teacher's fields phi, and field indices into the block
// covariance C:
//
//   d<lambda_i x>/dtau = -aW h_i <g'(lambda_i) Delta x>               (R, U, Q cross terms)
//   dq_ik/dtau        += aW^2 h_i h_k <g'(lambda_i) g'(lambda_k) Delta^2>
//   dh_i/dtau          = -ah <Delta g(lambda_i)>
//
// Every average is a signed sum of I2/I3/I4 terms. The same code path serves
// both phases; only the active head pair and teacher block change, so the
// passive student-teacher overlap (U in phase 1, R in phase 2) evolves
// through the same mechanism as the active one.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tscl/activation.hpp"
#include "tscl/errors.hpp"
#include "tscl/gaussian_integrals.hpp"
#include "tscl/order_params.hpp"
#include "tscl/task.hpp"

namespace tscl {

enum class OdeMethod { Euler, Rk4 };
enum class LogGrid { Linear, Geometric };

struct OdeSchedule {
  double switch_time = 100.0;  // tau at which the target teacher changes
  double end_time = 300.0;
  double dt = 0.01;
  double lr_w = 1.0;
  double lr_h = 1.0;
  double log_every = 0.15;           // linear grid spacing
  LogGrid grid = LogGrid::Linear;
  int geometric_points = 2000;       // used when grid == Geometric
  std::vector<double> extra_log_times;  // always hit exactly
  OdeMethod method = OdeMethod::Rk4;

  void validate() const {
    if (!(dt > 0.0 && dt <= 0.1)) throw std::invalid_argument("OdeSchedule: need 0 < dt <= 0.1");
    if (!(switch_time > 0.0 && switch_time <= end_time))
      throw std::invalid_argument("OdeSchedule: need 0 < switch_time <= end_time");
    if (grid == LogGrid::Linear && !(log_every > 0.0))
      throw std::invalid_argument("OdeSchedule: log_every must be positive");
  }
};

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<OverlapState> states;
  std::vector<double> eps_dag;
  std::vector<double> eps_ddag;

  std::size_t size() const { return times.size(); }
};

namespace detail {

struct Integrals {
  Activation activation;

  double two(const ProjectedCovariance& c) const {
    return activation == Activation::Linear ? linear_i2(c) : i2(c);
  }
  double three(const ProjectedCovariance& c) const {
    return activation == Activation::Linear ? linear_i3(c) : i3(c);
  }
  double four(const ProjectedCovariance& c) const {
    return activation == Activation::Linear ? linear_i4(c) : i4(c);
  }
};

inline Integrals integrals_for(Activation a) {
  if (a == Activation::Relu)
    throw std::invalid_argument("ODE engine: no closed-form integrals for ReLU; use simulation");
  return Integrals{a};
}

}  // namespace detail

/// Time derivative of the order parameters while training the `active`
/// head. Teacher blocks, teacher heads and the inactive student head have
/// zero derivative.
inline OverlapState rhs(const OverlapState& s, TaskId active, double lr_w, double lr_h,
                        Activation activation = Activation::ErfScaled) {
  s.validate_dims();
  const detail::Integrals I = detail::integrals_for(activation);
  const FieldLayout lay = layout(s);
  const Eigen::MatrixXd C = assemble_covariance(s);
  const int k = s.K();
  const Eigen::VectorXd& h = s.student_head(active);
  const Eigen::VectorXd& v = s.teacher_head(active);

  // Delta = sum_src weight[src] g(field[src]).
  std::vector<int> src;
  std::vector<double> weight;
  for (int i = 0; i < k; ++i) {
    src.push_back(lay.student(i));
    weight.push_back(h[i]);
  }
  for (int a = 0; a < lay.teacher_size(active); ++a) {
    src.push_back(lay.teacher(active, a));
    weight.push_back(-v[a]);
  }
  const int n_src = static_cast<int>(src.size());

  // drift(i, x) = -lr_w h_i <g'(lambda_i) Delta x> for every field x.
  const int n_fields = lay.size();
  Eigen::MatrixXd drift(k, n_fields);
  for (int i = 0; i < k; ++i) {
    for (int x = 0; x < n_fields; ++x) {
      double avg = 0.0;
      for (int a = 0; a < n_src; ++a) avg += weight[a] * I.three(project(C, {i, x, src[a]}));
      drift(i, x) = -lr_w * h[i] * avg;
    }
  }

  OverlapState ds = OverlapState::zeros(k, s.M(), s.P());
  for (int i = 0; i < k; ++i) {
    for (int n = 0; n < s.M(); ++n) ds.R(i, n) = drift(i, lay.dagger(n));
    for (int p = 0; p < s.P(); ++p) ds.U(i, p) = drift(i, lay.ddagger(p));
  }

  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      // <g'(lambda_i) g'(lambda_j) Delta^2>, symmetric in the source pair.
      double quad = 0.0;
      for (int a = 0; a < n_src; ++a) {
        quad += weight[a] * weight[a] * I.four(project(C, {i, j, src[a], src[a]}));
        for (int b = a + 1; b < n_src; ++b)
          quad += 2.0 * weight[a] * weight[b] * I.four(project(C, {i, j, src[a], src[b]}));
      }
      const double dq = drift(i, lay.student(j)) + drift(j, lay.student(i)) + lr_w * lr_w * h[i] * h[j] * quad;
      ds.Q(i, j) = dq;
      ds.Q(j, i) = dq;
    }
  }

  Eigen::VectorXd dh(k);
  for (int i = 0; i < k; ++i) {
    double avg = 0.0;
    for (int a = 0; a < n_src; ++a) avg += weight[a] * I.two(project(C, {src[a], i}));
    dh[i] = -lr_h * avg;
  }
  (active == TaskId::Dagger ? ds.h_dag : ds.h_ddag) = dh;

  if (!ds.Q.allFinite() || !ds.R.allFinite() || !ds.U.allFinite() || !dh.allFinite())
    throw NonFiniteError("ODE rhs produced a non-finite derivative at state:\n" + s.dump());
  return ds;
}

/// Max-norm of the derivative over the evolving blocks (Q, R, U, active head).
inline double fixed_point_residual(const OverlapState& s, TaskId active, double lr_w = 1.0, double lr_h = 1.0,
                                   Activation activation = Activation::ErfScaled) {
  const OverlapState ds = rhs(s, active, lr_w, lr_h, activation);
  double r = 0.0;
  auto upd = [&r](const auto& m) {
    if (m.size() > 0) r = std::max(r, m.cwiseAbs().maxCoeff());
  };
  upd(ds.Q);
  upd(ds.R);
  upd(ds.U);
  upd(ds.student_head(active));
  return r;
}

namespace detail {

// Only evolving blocks are touched so that teacher quantities and the
// inactive head stay bitwise constant.
inline void advance(OverlapState& s, double a, const OverlapState& ds, TaskId active) {
  s.Q += a * ds.Q;
  s.R += a * ds.R;
  s.U += a * ds.U;
  if (active == TaskId::Dagger)
    s.h_dag += a * ds.h_dag;
  else
    s.h_ddag += a * ds.h_ddag;
}

inline void ode_step(OverlapState& s, double h, TaskId active, const OdeSchedule& sched, Activation act) {
  if (sched.method == OdeMethod::Euler) {
    advance(s, h, rhs(s, active, sched.lr_w, sched.lr_h, act), active);
    return;
  }
  const OverlapState k1 = rhs(s, active, sched.lr_w, sched.lr_h, act);
  OverlapState tmp = s;
  advance(tmp, 0.5 * h, k1, active);
  const OverlapState k2 = rhs(tmp, active, sched.lr_w, sched.lr_h, act);
  tmp = s;
  advance(tmp, 0.5 * h, k2, active);
  const OverlapState k3 = rhs(tmp, active, sched.lr_w, sched.lr_h, act);
  tmp = s;
  advance(tmp, h, k3, active);
  const OverlapState k4 = rhs(tmp, active, sched.lr_w, sched.lr_h, act);
  OverlapState sum = k1;
  sum.axpy(2.0, k2);
  sum.axpy(2.0, k3);
  sum.axpy(1.0, k4);
  advance(s, h / 6.0, sum, active);
}

}  // namespace detail

/// Sorted, de-duplicated recording times of a schedule.
inline std::vector<double> log_times(const OdeSchedule& sched) {
  std::vector<double> t{0.0, sched.switch_time, sched.end_time};
  if (sched.grid == LogGrid::Linear) {
    const auto n = static_cast<long long>(std::floor(sched.end_time / sched.log_every + 1e-9));
    for (long long i = 1; i <= n; ++i) t.push_back(static_cast<double>(i) * sched.log_every);
  } else {
    const double lo = std::log(sched.dt), hi = std::log(sched.end_time);
    for (int i = 0; i < sched.geometric_points; ++i)
      t.push_back(std::exp(lo + (hi - lo) * i / std::max(1, sched.geometric_points - 1)));
  }
  for (double x : sched.extra_log_times)
    if (x >= 0.0 && x <= sched.end_time) t.push_back(x);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.erase(std::remove_if(t.begin(), t.end(), [&](double x) { return x > sched.end_time; }), t.end());
  return t;
}

/// Fixed-step integration over the two-phase schedule. Each interval
/// between consecutive recording times is split into equal steps no longer
/// than dt, so the switch and every requested time are hit exactly.
inline OdeTrajectory integrate(const OverlapState& s0, const OdeSchedule& sched,
                               Activation activation = Activation::ErfScaled) {
  sched.validate();
  s0.validate_dims();
  const std::vector<double> times = log_times(sched);

  OdeTrajectory traj;
  OverlapState s = s0;
  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.states.push_back(s);
    traj.eps_dag.push_back(gen_error(s, TaskId::Dagger, activation));
    traj.eps_ddag.push_back(gen_error(s, TaskId::Ddagger, activation));
  };
  record(times.front());

  for (std::size_t c = 1; c < times.size(); ++c) {
    const double t0 = times[c - 1], t1 = times[c];
    const TaskId active = t0 < sched.switch_time ? TaskId::Dagger : TaskId::Ddagger;
    const auto n_steps = std::max<long long>(1, static_cast<long long>(std::ceil((t1 - t0) / sched.dt - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(n_steps);
    const OverlapState last_valid = s;
    try {
      for (long long n = 0; n < n_steps; ++n) detail::ode_step(s, h, active, sched, activation);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(std::string("integrate: aborted in (") + std::to_string(t0) + ", " +
                           std::to_string(t1) + "]: " + e.what() + "\nlast valid state:\n" + last_valid.dump());
    }
    if (!s.all_finite())
      throw NonFiniteError("integrate: non-finite state after tau=" + std::to_string(t1) +
                           "\nlast valid state:\n" + last_valid.dump());
    record(t1);
  }
  return traj;
}

}  // namespace tscl
