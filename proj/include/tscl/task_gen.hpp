#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <json.hpp>

#include "tscl/activation.hpp"
#include "tscl/errors.hpp"
#include "tscl/network.hpp"
#include "tscl/rng.hpp"

namespace tscl {

enum class Regime { OdeLimit, MeanField };

inline std::string_view to_string(Regime r) { return r == Regime::OdeLimit ? "ode_limit" : "mean_field"; }

struct SimilaritySpec {
  double feature_overlap = 0.0;                 // V
  std::optional<double> readout_overlap;        // V-tilde, mean-field only
  Regime regime = Regime::OdeLimit;
  int input_dim = 10000;                        // D
  int dagger_hidden = 1;                        // M
  int ddagger_hidden = 1;                       // P
  Activation activation = Activation::ErfScaled;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SimilaritySpec& s) {
  j = nlohmann::json{{"V", s.feature_overlap},
                     {"regime", to_string(s.regime)},
                     {"D", s.input_dim},
                     {"M", s.dagger_hidden},
                     {"P", s.ddagger_hidden},
                     {"activation", to_string(s.activation)},
                     {"seed", s.seed}};
  j["Vtilde"] = s.readout_overlap ? nlohmann::json(*s.readout_overlap) : nlohmann::json(nullptr);
}

struct TeacherPair {
  TwoLayerNet dagger;
  TwoLayerNet ddagger;
  SimilaritySpec spec;
};

/// First `k` columns of a Haar-distributed n x n orthogonal matrix: thin
/// QR of an n x k standard Gaussian matrix with the signs of R's diagonal
/// folded into Q. Columns are filled first, so for k < n this equals the
/// leading columns of random_orthogonal(n, seed).
inline Eigen::MatrixXd random_orthonormal_columns(int n, int k, std::uint64_t seed) {
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("random_orthonormal_columns: need 1 <= k <= n");
  NormalSampler normal(make_engine(seed, Stream::Orthogonal));
  Eigen::MatrixXd a(n, k);
  normal.fill(a);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

inline Eigen::MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("random_orthogonal: n must be >= 2");
  return random_orthonormal_columns(n, n, seed);
}

namespace detail {
// Rotate (0, 1) and (sin theta, cos theta) into the plane of two orthonormal
// columns; cos theta = v.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> rotate_pair(const Eigen::VectorXd& e0,
                                                               const Eigen::VectorXd& e1, double v) {
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - v * v));
  return {e1, sin_theta * e0 + v * e1};
}
}  // namespace detail

/// Two unit n-vectors with dot product v, uniformly oriented over seeds.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> unit_pair_with_overlap(int n, double v, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("unit_pair_with_overlap: n must be >= 2");
  if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("unit_pair_with_overlap: v must be in [-1, 1]");
  const Eigen::MatrixXd q = random_orthonormal_columns(n, 2, seed);
  return detail::rotate_pair(q.col(0), q.col(1), v);
}

/// Large-input teachers with t_mm = s_mm = 1, v_mm = V and vanishing
/// off-diagonal overlaps; every unit pair lives in its own 2-plane of a
/// common orthonormal frame. Heads are +1.
inline TeacherPair make_teachers_ode_limit(const SimilaritySpec& spec) {
  if (spec.regime != Regime::OdeLimit) throw std::invalid_argument("make_teachers_ode_limit: wrong regime");
  if (spec.dagger_hidden != spec.ddagger_hidden)
    throw std::invalid_argument("make_teachers_ode_limit: requires M == P");
  if (!(spec.feature_overlap >= -1.0 && spec.feature_overlap <= 1.0))
    throw std::invalid_argument("make_teachers_ode_limit: V must be in [-1, 1]");
  const int d = spec.input_dim, m = spec.dagger_hidden;
  if (d < 2 * m) throw DimensionMismatch("make_teachers_ode_limit: need D >= 2M");

  const Eigen::MatrixXd frame = random_orthonormal_columns(d, 2 * m, derive_seed(spec.seed, Stream::TeacherFeatures));
  const double scale = std::sqrt(static_cast<double>(d));
  RowMatrix w1(m, d), w2(m, d);
  for (int u = 0; u < m; ++u) {
    auto [a, b] = detail::rotate_pair(frame.col(2 * u), frame.col(2 * u + 1), spec.feature_overlap);
    w1.row(u) = scale * a.transpose();
    w2.row(u) = scale * b.transpose();
  }
  return {TwoLayerNet::teacher(std::move(w1), Eigen::VectorXd::Ones(m), TaskId::Dagger, spec.activation,
                               Scaling::LargeInput),
          TwoLayerNet::teacher(std::move(w2), Eigen::VectorXd::Ones(m), TaskId::Ddagger, spec.activation,
                               Scaling::LargeInput),
          spec};
}

/// Mean-field teachers. Feature rows of the first teacher are i.i.d.
/// Gaussian normalised to unit length; the second is
///   W2 = V W1 + sqrt(1 - V^2) Z
/// with Z drawn the same way, so rows keep unit expected squared norm and
/// V is the expected row overlap. Readouts are sqrt(M) times a unit pair
/// with cosine V-tilde.
inline TeacherPair make_teachers_mean_field(const SimilaritySpec& spec) {
  if (spec.regime != Regime::MeanField) throw std::invalid_argument("make_teachers_mean_field: wrong regime");
  if (spec.dagger_hidden != spec.ddagger_hidden)
    throw std::invalid_argument("make_teachers_mean_field: requires M == P");
  if (!spec.readout_overlap) throw std::invalid_argument("make_teachers_mean_field: readout overlap required");
  const double vt = *spec.readout_overlap;
  if (!(vt >= -1.0 && vt <= 1.0)) throw std::invalid_argument("make_teachers_mean_field: V-tilde must be in [-1, 1]");
  const double alpha = spec.feature_overlap;
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("make_teachers_mean_field: V must be in [0, 1]");
  const int d = spec.input_dim, m = spec.dagger_hidden;

  NormalSampler normal(make_engine(spec.seed, Stream::TeacherFeatures));
  auto unit_rows = [&](RowMatrix& w) {
    normal.fill(w);
    for (int r = 0; r < w.rows(); ++r) w.row(r).normalize();
  };
  RowMatrix w1(m, d), z(m, d);
  unit_rows(w1);
  unit_rows(z);
  RowMatrix w2 = alpha * w1 + std::sqrt(std::max(0.0, 1.0 - alpha * alpha)) * z;

  auto [r1, r2] = unit_pair_with_overlap(m, vt, derive_seed(spec.seed, Stream::TeacherReadout));
  const double scale = std::sqrt(static_cast<double>(m));
  return {TwoLayerNet::teacher(std::move(w1), scale * r1, TaskId::Dagger, spec.activation, Scaling::MeanField),
          TwoLayerNet::teacher(std::move(w2), scale * r2, TaskId::Ddagger, spec.activation, Scaling::MeanField),
          spec};
}

inline TeacherPair make_teachers(const SimilaritySpec& spec) {
  return spec.regime == Regime::OdeLimit ? make_teachers_ode_limit(spec) : make_teachers_mean_field(spec);
}

}  // namespace tscl
