#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "tscl/activation.hpp"
#include "tscl/errors.hpp"
#include "tscl/rng.hpp"
#include "tscl/task.hpp"

namespace tscl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// LargeInput: phi(x) = sum_l v_l g(w_l x / sqrt D).
/// MeanField:  phi(x) = (1/H) sum_l v_l g(w_l x).
enum class Scaling { LargeInput, MeanField };

inline std::string_view to_string(Scaling s) {
  return s == Scaling::LargeInput ? "large_input" : "mean_field";
}

/// Two-layer network with a shared H x D feature matrix and one readout head
/// per task. Teachers carry a single head, the continual-learning student
/// carries both.
class TwoLayerNet {
 public:
  TwoLayerNet(RowMatrix features, Activation activation, Scaling scaling)
      : w_(std::move(features)), activation_(activation), scaling_(scaling) {}

  static TwoLayerNet teacher(RowMatrix features, Eigen::VectorXd head, TaskId task,
                             Activation activation, Scaling scaling) {
    TwoLayerNet net(std::move(features), activation, scaling);
    net.set_head(task, std::move(head));
    return net;
  }

  static TwoLayerNet student(RowMatrix features, Eigen::VectorXd head_dagger,
                             Eigen::VectorXd head_ddagger, Activation activation,
                             Scaling scaling) {
    TwoLayerNet net(std::move(features), activation, scaling);
    net.set_head(TaskId::Dagger, std::move(head_dagger));
    net.set_head(TaskId::Ddagger, std::move(head_ddagger));
    return net;
  }

  int hidden() const { return static_cast<int>(w_.rows()); }
  int input_dim() const { return static_cast<int>(w_.cols()); }
  Activation activation() const { return activation_; }
  Scaling scaling() const { return scaling_; }

  const RowMatrix& features() const { return w_; }
  RowMatrix& features() { return w_; }

  bool has_head(TaskId t) const { return heads_[index(t)].has_value(); }

  const Eigen::VectorXd& head(TaskId t) const {
    if (!has_head(t)) throw std::invalid_argument("network has no head for task " + std::string(to_string(t)));
    return *heads_[index(t)];
  }
  Eigen::VectorXd& head(TaskId t) {
    if (!has_head(t)) throw std::invalid_argument("network has no head for task " + std::string(to_string(t)));
    return *heads_[index(t)];
  }

  /// The only head of a single-head (teacher) network.
  const Eigen::VectorXd& sole_head() const {
    if (has_head(TaskId::Dagger) == has_head(TaskId::Ddagger))
      throw std::logic_error("sole_head() on a network without exactly one head");
    return has_head(TaskId::Dagger) ? *heads_[0] : *heads_[1];
  }

  void set_head(TaskId t, Eigen::VectorXd head) {
    if (head.size() != w_.rows()) throw DimensionMismatch("head length must equal hidden size");
    heads_[index(t)] = std::move(head);
  }

  /// Scale applied to W x to form preactivations.
  double preactivation_scale() const {
    return scaling_ == Scaling::LargeInput ? 1.0 / std::sqrt(static_cast<double>(input_dim())) : 1.0;
  }
  /// Scale applied to sum_l v_l g(.) to form the output.
  double output_scale() const {
    return scaling_ == Scaling::MeanField ? 1.0 / static_cast<double>(hidden()) : 1.0;
  }

 private:
  RowMatrix w_;
  std::array<std::optional<Eigen::VectorXd>, 2> heads_;
  Activation activation_;
  Scaling scaling_;
};

namespace detail {
inline double readout(const TwoLayerNet& net, const Eigen::VectorXd& pre, const Eigen::VectorXd& head) {
  double acc = 0.0;
  for (Eigen::Index l = 0; l < pre.size(); ++l) acc += head[l] * activate(net.activation(), pre[l]);
  return net.output_scale() * acc;
}
}  // namespace detail

/// Hidden preactivations for input x.
inline Eigen::VectorXd preactivations(const TwoLayerNet& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != net.input_dim()) throw DimensionMismatch("input length must equal D");
  return (net.features() * x) * net.preactivation_scale();
}

inline double forward(const TwoLayerNet& net, const Eigen::Ref<const Eigen::VectorXd>& x, TaskId task) {
  return detail::readout(net, preactivations(net, x), net.head(task));
}

/// Output of a single-head network.
inline double forward(const TwoLayerNet& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return detail::readout(net, preactivations(net, x), net.sole_head());
}

/// One online SGD step on 1/2 (yhat - y)^2 for the head of `task` and the
/// shared features. LargeInput uses the lr_w / sqrt(D) and lr_h / D
/// scalings; MeanField uses plain gradients of the 1/H-scaled forward map.
/// Returns the pre-update error signal Delta = yhat - y.
inline double sgd_step(TwoLayerNet& student, double target, const Eigen::Ref<const Eigen::VectorXd>& x,
                       TaskId task, double lr_w, double lr_h) {
  if (!std::isfinite(target) || !x.allFinite()) throw NonFiniteError("sgd_step: non-finite sample");
  const Eigen::VectorXd pre = preactivations(student, x);
  Eigen::VectorXd& h = student.head(task);
  const double delta = detail::readout(student, pre, h) - target;
  const double d = static_cast<double>(student.input_dim());
  const Activation act = student.activation();

  double w_rate, h_rate;
  if (student.scaling() == Scaling::LargeInput) {
    w_rate = lr_w / std::sqrt(d);
    h_rate = lr_h / d;
  } else {
    w_rate = lr_w * student.output_scale();
    h_rate = lr_h * student.output_scale();
  }

  RowMatrix& w = student.features();
  for (Eigen::Index k = 0; k < pre.size(); ++k) {
    const double coeff = w_rate * h[k] * activate_derivative(act, pre[k]) * delta;
    if (coeff != 0.0) w.row(k).noalias() -= coeff * x.transpose();
  }
  for (Eigen::Index k = 0; k < pre.size(); ++k) h[k] -= h_rate * activate(act, pre[k]) * delta;
  return delta;
}

inline double sgd_step(TwoLayerNet& student, const TwoLayerNet& teacher,
                       const Eigen::Ref<const Eigen::VectorXd>& x, TaskId task, double lr_w, double lr_h) {
  return sgd_step(student, forward(teacher, x), x, task, lr_w, lr_h);
}

/// Fixed i.i.d. standard-Gaussian test inputs with cached teacher labels.
class TestSet {
 public:
  TestSet(int n, int input_dim, std::uint64_t seed) : x_(n, input_dim) {
    NormalSampler normal(make_engine(seed, Stream::TestSet));
    normal.fill(x_);
  }

  int size() const { return static_cast<int>(x_.rows()); }
  const RowMatrix& inputs() const { return x_; }

  void set_labels(TaskId task, const TwoLayerNet& teacher) { labels_[index(task)] = outputs(teacher, nullptr); }
  bool has_labels(TaskId task) const { return labels_[index(task)].size() == x_.rows(); }
  const Eigen::VectorXd& labels(TaskId task) const { return labels_[index(task)]; }

  /// Network outputs on every test input; `task == nullptr` uses the sole head.
  Eigen::VectorXd outputs(const TwoLayerNet& net, const TaskId* task) const {
    if (net.input_dim() != x_.cols()) throw DimensionMismatch("test set dimension differs from network");
    const Eigen::VectorXd& head = task ? net.head(*task) : net.sole_head();
    // (n x D) * (D x H) in one product; the per-sample loop would dominate runtime.
    Eigen::MatrixXd pre = (x_ * net.features().transpose()) * net.preactivation_scale();
    const Activation act = net.activation();
    Eigen::VectorXd out(x_.rows());
    for (Eigen::Index n = 0; n < pre.rows(); ++n) {
      double acc = 0.0;
      for (Eigen::Index l = 0; l < pre.cols(); ++l) acc += head[l] * activate(act, pre(n, l));
      out[n] = net.output_scale() * acc;
    }
    return out;
  }

  /// 1/2 mean (yhat - y)^2 of the student's `task` head against cached labels.
  double gen_error(const TwoLayerNet& student, TaskId task) const {
    if (!has_labels(task)) throw std::logic_error("test set has no labels for task");
    Eigen::VectorXd diff = outputs(student, &task) - labels_[index(task)];
    return 0.5 * diff.squaredNorm() / static_cast<double>(diff.size());
  }

 private:
  RowMatrix x_;
  std::array<Eigen::VectorXd, 2> labels_;
};

namespace detail {
struct ErrorEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Streams the inputs in blocks so memory stays bounded for large D.
inline ErrorEstimate streamed_gen_error(const TwoLayerNet& student, const TwoLayerNet& teacher, TaskId task,
                                        int n_test, std::uint64_t seed) {
  if (n_test < 1000) throw std::invalid_argument("empirical_gen_error: n_test must be >= 1000");
  if (student.input_dim() != teacher.input_dim()) throw DimensionMismatch("student/teacher input dims differ");
  const int d = student.input_dim();
  constexpr int kBlock = 1024;
  NormalSampler normal(make_engine(seed, Stream::TestSet));
  RowMatrix x;
  double sum = 0.0, sum_sq = 0.0;
  for (int done = 0; done < n_test; done += kBlock) {
    const int rows = std::min(kBlock, n_test - done);
    x.resize(rows, d);
    normal.fill(x);
    for (int r = 0; r < rows; ++r) {
      const double diff = forward(student, x.row(r).transpose(), task) - forward(teacher, x.row(r).transpose());
      const double loss = 0.5 * diff * diff;
      sum += loss;
      sum_sq += loss * loss;
    }
  }
  const double n = static_cast<double>(n_test);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}
}  // namespace detail

/// 1/2 <(yhat - y)^2> over n_test fresh Gaussian inputs drawn from `seed`.
inline double empirical_gen_error(const TwoLayerNet& student, const TwoLayerNet& teacher, TaskId task,
                                  int n_test, std::uint64_t seed) {
  return detail::streamed_gen_error(student, teacher, task, n_test, seed).mean;
}

/// Standard error of the empirical_gen_error estimate (same draws).
inline double empirical_gen_error_se(const TwoLayerNet& student, const TwoLayerNet& teacher, TaskId task,
                                     int n_test, std::uint64_t seed) {
  return detail::streamed_gen_error(student, teacher, task, n_test, seed).std_error;
}

}  // namespace tscl
