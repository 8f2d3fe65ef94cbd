#pragma once

#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tscl/activation.hpp"
#include "tscl/errors.hpp"
#include "tscl/gaussian_integrals.hpp"
#include "tscl/network.hpp"
#include "tscl/task.hpp"

namespace tscl {

/// Macroscopic state of a K-unit student against teachers with M (dagger)
/// and P (ddagger) units: all second moments of the local fields
/// (lambda, rho, eta) plus the readout heads.
struct OverlapState {
  Eigen::MatrixXd Q;  // K x K  <lambda_k lambda_l>
  Eigen::MatrixXd R;  // K x M  <lambda_k rho_m>
  Eigen::MatrixXd U;  // K x P  <lambda_k eta_p>
  Eigen::MatrixXd T;  // M x M  <rho_m rho_n>
  Eigen::MatrixXd S;  // P x P  <eta_p eta_q>
  Eigen::MatrixXd V;  // M x P  <rho_m eta_p>
  Eigen::VectorXd h_dag, h_ddag;  // student heads
  Eigen::VectorXd v_dag, v_ddag;  // teacher heads

  int K() const { return static_cast<int>(Q.rows()); }
  int M() const { return static_cast<int>(T.rows()); }
  int P() const { return static_cast<int>(S.rows()); }

  const Eigen::VectorXd& student_head(TaskId t) const { return t == TaskId::Dagger ? h_dag : h_ddag; }
  const Eigen::VectorXd& teacher_head(TaskId t) const { return t == TaskId::Dagger ? v_dag : v_ddag; }

  /// Zero-initialised state of the given sizes.
  static OverlapState zeros(int k, int m, int p) {
    OverlapState s;
    s.Q = Eigen::MatrixXd::Zero(k, k);
    s.R = Eigen::MatrixXd::Zero(k, m);
    s.U = Eigen::MatrixXd::Zero(k, p);
    s.T = Eigen::MatrixXd::Zero(m, m);
    s.S = Eigen::MatrixXd::Zero(p, p);
    s.V = Eigen::MatrixXd::Zero(m, p);
    s.h_dag = Eigen::VectorXd::Zero(k);
    s.h_ddag = Eigen::VectorXd::Zero(k);
    s.v_dag = Eigen::VectorXd::Zero(m);
    s.v_ddag = Eigen::VectorXd::Zero(p);
    return s;
  }

  void validate_dims() const {
    const int k = K(), m = M(), p = P();
    auto check = [](bool ok, const char* what) {
      if (!ok) throw DimensionMismatch(std::string("OverlapState: inconsistent ") + what);
    };
    check(Q.cols() == k, "Q");
    check(R.rows() == k && R.cols() == m, "R");
    check(U.rows() == k && U.cols() == p, "U");
    check(T.cols() == m, "T");
    check(S.cols() == p, "S");
    check(V.rows() == m && V.cols() == p, "V");
    check(h_dag.size() == k && h_ddag.size() == k, "student heads");
    check(v_dag.size() == m && v_ddag.size() == p, "teacher heads");
  }

  bool all_finite() const {
    return Q.allFinite() && R.allFinite() && U.allFinite() && T.allFinite() && S.allFinite() &&
           V.allFinite() && h_dag.allFinite() && h_ddag.allFinite() && v_dag.allFinite() &&
           v_ddag.allFinite();
  }

  /// s += a * ds, block by block.
  void axpy(double a, const OverlapState& ds) {
    Q += a * ds.Q; R += a * ds.R; U += a * ds.U;
    T += a * ds.T; S += a * ds.S; V += a * ds.V;
    h_dag += a * ds.h_dag; h_ddag += a * ds.h_ddag;
    v_dag += a * ds.v_dag; v_ddag += a * ds.v_ddag;
  }

  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "Q=\n" << Q << "\nR=\n" << R << "\nU=\n" << U << "\nT=\n" << T << "\nS=\n" << S
       << "\nV=\n" << V << "\nh_dag=" << h_dag.transpose() << "\nh_ddag=" << h_ddag.transpose()
       << "\nv_dag=" << v_dag.transpose() << "\nv_ddag=" << v_ddag.transpose();
    return os.str();
  }
};

/// Field index layout of the block covariance: students, then teacher
/// dagger, then teacher ddagger.
struct FieldLayout {
  int k, m, p;
  int student(int i) const { return i; }
  int dagger(int n) const { return k + n; }
  int ddagger(int q) const { return k + m + q; }
  int teacher(TaskId t, int i) const { return t == TaskId::Dagger ? dagger(i) : ddagger(i); }
  int teacher_size(TaskId t) const { return t == TaskId::Dagger ? m : p; }
  int size() const { return k + m + p; }
};

inline FieldLayout layout(const OverlapState& s) { return {s.K(), s.M(), s.P()}; }

/// C = [[Q, R, U], [R^T, T, V], [U^T, V^T, S]].
inline Eigen::MatrixXd assemble_covariance(const OverlapState& s) {
  s.validate_dims();
  const int k = s.K(), m = s.M(), p = s.P();
  Eigen::MatrixXd c(k + m + p, k + m + p);
  c.block(0, 0, k, k) = s.Q;
  c.block(0, k, k, m) = s.R;
  c.block(0, k + m, k, p) = s.U;
  c.block(k, 0, m, k) = s.R.transpose();
  c.block(k, k, m, m) = s.T;
  c.block(k, k + m, m, p) = s.V;
  c.block(k + m, 0, p, k) = s.U.transpose();
  c.block(k + m, k, p, m) = s.V.transpose();
  c.block(k + m, k + m, p, p) = s.S;
  return c;
}

/// Sub-covariance of the given fields, in the given order. Repeated indices
/// are allowed (e.g. I2(i, i)).
inline ProjectedCovariance project(const Eigen::MatrixXd& c, std::initializer_list<int> indices) {
  const int n = static_cast<int>(indices.size());
  if (n < 2 || n > 4) throw DimensionMismatch("project: need 2 to 4 indices");
  std::array<int, 4> idx{};
  int a = 0;
  for (int i : indices) {
    if (i < 0 || i >= c.rows()) throw std::out_of_range("project: field index out of range");
    idx[a++] = i;
  }
  ProjectedCovariance out(n);
  for (int r = 0; r < n; ++r)
    for (int q = r; q < n; ++q) out.set(r, q, 0.5 * (c(idx[r], idx[q]) + c(idx[q], idx[r])));
  return out;
}

inline ProjectedCovariance project(const Eigen::MatrixXd& c, const std::vector<int>& indices) {
  switch (indices.size()) {
    case 2: return project(c, {indices[0], indices[1]});
    case 3: return project(c, {indices[0], indices[1], indices[2]});
    case 4: return project(c, {indices[0], indices[1], indices[2], indices[3]});
    default: throw DimensionMismatch("project: need 2 to 4 indices");
  }
}

inline bool is_psd(const Eigen::MatrixXd& c, double tol = 1e-9) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

inline constexpr double kErrorClampTolerance = 1e-9;

namespace detail {
inline double clamp_error(double eps) {
  if (eps < 0.0 && eps > -kErrorClampTolerance) return 0.0;
  return eps;
}
}  // namespace detail

/// Generalisation error of the student's `task` head as a function of the
/// order parameters:
///   eps = 1/2 sum_ik h_i h_k I2(i,k) + 1/2 sum_nm v_n v_m I2(n,m) - sum_in h_i v_n I2(i,n).
/// Exact for the linear activation, closed form for scaled erf; ReLU has no
/// closed form and throws.
inline double gen_error(const OverlapState& s, TaskId task, Activation activation = Activation::ErfScaled) {
  s.validate_dims();
  const Eigen::VectorXd& h = s.student_head(task);
  const Eigen::VectorXd& v = s.teacher_head(task);
  const Eigen::MatrixXd& tt = task == TaskId::Dagger ? s.T : s.S;
  const Eigen::MatrixXd& rr = task == TaskId::Dagger ? s.R : s.U;

  if (activation == Activation::Linear) {
    double eps = 0.5 * (h.dot(s.Q * h) + v.dot(tt * v)) - h.dot(rr * v);
    return detail::clamp_error(eps);
  }
  if (activation == Activation::Relu)
    throw std::invalid_argument("gen_error: no closed form for ReLU; use simulation");

  const int k = s.K(), m = static_cast<int>(v.size());
  auto pair = [](double caa, double cab, double cbb) {
    ProjectedCovariance c(2);
    c.set(0, 0, caa);
    c.set(0, 1, cab);
    c.set(1, 1, cbb);
    return i2(c);
  };
  double student_term = 0.0, teacher_term = 0.0, cross = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) student_term += h[i] * h[j] * pair(s.Q(i, i), s.Q(i, j), s.Q(j, j));
  for (int n = 0; n < m; ++n)
    for (int q = 0; q < m; ++q) teacher_term += v[n] * v[q] * pair(tt(n, n), tt(n, q), tt(q, q));
  for (int i = 0; i < k; ++i)
    for (int n = 0; n < m; ++n) cross += h[i] * v[n] * pair(s.Q(i, i), rr(i, n), tt(n, n));
  const double eps = 0.5 * student_term + 0.5 * teacher_term - cross;
  if (!std::isfinite(eps)) throw NonFiniteError("gen_error: non-finite result\n" + s.dump());
  return detail::clamp_error(eps);
}

/// Overlaps of a large-input-scaled student with two teachers, each block
/// (1/D) times row-wise inner products. Heads are copied verbatim.
inline OverlapState overlaps_from_weights(const TwoLayerNet& student, const TwoLayerNet& t1,
                                          const TwoLayerNet& t2) {
  const int d = student.input_dim();
  if (t1.input_dim() != d || t2.input_dim() != d) throw DimensionMismatch("overlaps: input dims differ");
  if (student.scaling() != Scaling::LargeInput || t1.scaling() != Scaling::LargeInput ||
      t2.scaling() != Scaling::LargeInput)
    throw std::invalid_argument("overlaps_from_weights: requires large-input scaling");
  const double inv_d = 1.0 / static_cast<double>(d);
  const RowMatrix& w = student.features();
  const RowMatrix& w1 = t1.features();
  const RowMatrix& w2 = t2.features();
  OverlapState s;
  s.Q = inv_d * (w * w.transpose());
  s.R = inv_d * (w * w1.transpose());
  s.U = inv_d * (w * w2.transpose());
  s.T = inv_d * (w1 * w1.transpose());
  s.S = inv_d * (w2 * w2.transpose());
  s.V = inv_d * (w1 * w2.transpose());
  s.h_dag = student.head(TaskId::Dagger);
  s.h_ddag = student.head(TaskId::Ddagger);
  s.v_dag = t1.sole_head();
  s.v_ddag = t2.sole_head();
  return s;
}

namespace detail {
inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != static_cast<std::size_t>(rows * cols)) throw DimensionMismatch("matrix json: bad data length");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m = matrix_from_json(j);
  if (m.cols() != 1) throw DimensionMismatch("vector json must have one column");
  return m.col(0);
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const OverlapState& s) {
  j = nlohmann::json{{"K", s.K()}, {"M", s.M()}, {"P", s.P()},
                     {"Q", detail::matrix_to_json(s.Q)}, {"R", detail::matrix_to_json(s.R)},
                     {"U", detail::matrix_to_json(s.U)}, {"T", detail::matrix_to_json(s.T)},
                     {"S", detail::matrix_to_json(s.S)}, {"V", detail::matrix_to_json(s.V)},
                     {"h_dag", detail::matrix_to_json(s.h_dag)}, {"h_ddag", detail::matrix_to_json(s.h_ddag)},
                     {"v_dag", detail::matrix_to_json(s.v_dag)}, {"v_ddag", detail::matrix_to_json(s.v_ddag)}};
}

inline void from_json(const nlohmann::json& j, OverlapState& s) {
  s.Q = detail::matrix_from_json(j.at("Q"));
  s.R = detail::matrix_from_json(j.at("R"));
  s.U = detail::matrix_from_json(j.at("U"));
  s.T = detail::matrix_from_json(j.at("T"));
  s.S = detail::matrix_from_json(j.at("S"));
  s.V = detail::matrix_from_json(j.at("V"));
  s.h_dag = detail::vector_from_json(j.at("h_dag"));
  s.h_ddag = detail::vector_from_json(j.at("h_ddag"));
  s.v_dag = detail::vector_from_json(j.at("v_dag"));
  s.v_ddag = detail::vector_from_json(j.at("v_ddag"));
  s.validate_dims();
}

}  // namespace tscl
