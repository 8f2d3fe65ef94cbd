#pragma once

// Gaussian averages of the scaled-erf activation g(x) = erf(x/sqrt 2) over
// jointly Gaussian local fields, and a Monte-Carlo estimator of the same
// averages used as their oracle.
//
// Constants are the Monte-Carlo calibrated ones:
//   I2 = (2/pi) asin(c12 / sqrt((1+c11)(1+c22)))
//   I3 = (2/pi) (c23 (1+c11) - c12 c13) / ((1+c11) sqrt(L3)),  L3 = (1+c11)(1+c33) - c13^2
//   I4 = 4 / (pi^2 sqrt(L4)) asin(L0 / sqrt(L1 L2)),           L4 = (1+c11)(1+c22) - c12^2
// The 1/pi in front of I2 that is sometimes printed corresponds to half the
// true average; E[g(z)^2] = 1/3 for z ~ N(0,1) since g(z) is uniform on [-1,1].

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "tscl/activation.hpp"
#include "tscl/errors.hpp"
#include "tscl/rng.hpp"

namespace tscl {

enum class IntegralKind { I2 = 2, I3 = 3, I4 = 4 };

inline constexpr double kArcsinTolerance = 1e-9;
inline constexpr double kSingularTolerance = 1e-12;

/// A symmetric 2x2, 3x3 or 4x4 covariance of local fields. Field roles are
/// positional: I3 reads (zeta, beta, gamma), I4 reads (zeta, iota, beta, gamma).
class ProjectedCovariance {
 public:
  ProjectedCovariance() = default;

  explicit ProjectedCovariance(int dim) : dim_(dim) {
    if (dim < 2 || dim > 4) throw DimensionMismatch("projected covariance dim must be 2, 3 or 4");
  }

  /// Build from a row-major dim*dim array. Entries must be symmetric to
  /// 1e-9 relative; the stored matrix is the symmetrised one.
  static ProjectedCovariance from_row_major(int dim, std::span<const double> entries) {
    ProjectedCovariance c(dim);
    if (entries.size() != static_cast<std::size_t>(dim * dim))
      throw DimensionMismatch("projected covariance needs dim*dim entries");
    for (int a = 0; a < dim; ++a) {
      for (int b = 0; b < dim; ++b) {
        double ab = entries[a * dim + b], ba = entries[b * dim + a];
        double scale = std::max({1.0, std::abs(ab), std::abs(ba)});
        if (std::abs(ab - ba) > 1e-9 * scale)
          throw IntegralDomainError("projected covariance is not symmetric");
        c.c_[a * 4 + b] = 0.5 * (ab + ba);
      }
    }
    return c;
  }

  static ProjectedCovariance from_matrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("covariance must be square");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    return from_row_major(static_cast<int>(m.rows()),
                          std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  }

  int dim() const { return dim_; }

  /// 1-based accessor matching the c_ab notation of the closed forms.
  double operator()(int a, int b) const { return c_[(a - 1) * 4 + (b - 1)]; }

  /// Unchecked 0-based setter for hot loops; caller keeps it symmetric.
  void set(int a, int b, double v) {
    c_[a * 4 + b] = v;
    c_[b * 4 + a] = v;
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(dim_, dim_);
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b) m(a, b) = c_[a * 4 + b];
    return m;
  }

  bool is_psd(double tol = 1e-10) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix(), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol;
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (int a = 0; a < dim_; ++a) {
      os << (a ? ", [" : "[");
      for (int b = 0; b < dim_; ++b) os << (b ? ", " : "") << c_[a * 4 + b];
      os << ']';
    }
    os << ']';
    return os.str();
  }

 private:
  int dim_ = 2;
  std::array<double, 16> c_{};
};

namespace detail {

inline void require_dim(const ProjectedCovariance& c, int dim, const char* who) {
  if (c.dim() != dim) throw DimensionMismatch(std::string(who) + ": wrong covariance dimension");
}

inline double checked_asin(double arg, const char* who) {
  if (!std::isfinite(arg)) throw IntegralDomainError(std::string(who) + ": non-finite arcsin argument");
  if (std::abs(arg) > 1.0) {
    if (std::abs(arg) > 1.0 + kArcsinTolerance)
      throw IntegralDomainError(std::string(who) + ": arcsin argument " + std::to_string(arg) +
                                " outside [-1, 1]; covariance is invalid");
    arg = arg > 0 ? 1.0 : -1.0;
  }
  return std::asin(arg);
}

}  // namespace detail

/// <g(beta) g(gamma)> for fields (beta, gamma).
inline double i2(const ProjectedCovariance& c) {
  detail::require_dim(c, 2, "i2");
  double denom = (1.0 + c(1, 1)) * (1.0 + c(2, 2));
  if (!(denom > 0.0)) throw IntegralDomainError("i2: (1+c11)(1+c22) must be positive");
  return (2.0 / std::numbers::pi) * detail::checked_asin(c(1, 2) / std::sqrt(denom), "i2");
}

/// <g'(zeta) beta g(gamma)> for fields (zeta, beta, gamma).
inline double i3(const ProjectedCovariance& c) {
  detail::require_dim(c, 3, "i3");
  double lambda3 = (1.0 + c(1, 1)) * (1.0 + c(3, 3)) - c(1, 3) * c(1, 3);
  if (!(lambda3 > kSingularTolerance)) throw SingularCovariance("i3: Lambda3 <= 1e-12");
  return (2.0 / std::numbers::pi) * (c(2, 3) * (1.0 + c(1, 1)) - c(1, 2) * c(1, 3)) /
         ((1.0 + c(1, 1)) * std::sqrt(lambda3));
}

/// <g'(zeta) g'(iota) g(beta) g(gamma)> for fields (zeta, iota, beta, gamma).
inline double i4(const ProjectedCovariance& c) {
  detail::require_dim(c, 4, "i4");
  const double c11 = c(1, 1), c22 = c(2, 2), c33 = c(3, 3), c44 = c(4, 4);
  const double c12 = c(1, 2), c13 = c(1, 3), c14 = c(1, 4);
  const double c23 = c(2, 3), c24 = c(2, 4), c34 = c(3, 4);
  const double lambda4 = (1.0 + c11) * (1.0 + c22) - c12 * c12;
  const double lambda0 = lambda4 * c34 - c23 * c24 * (1.0 + c11) - c13 * c14 * (1.0 + c22) +
                         c12 * c13 * c24 + c12 * c14 * c23;
  const double lambda1 = lambda4 * (1.0 + c33) - c23 * c23 * (1.0 + c11) -
                         c13 * c13 * (1.0 + c22) + 2.0 * c12 * c13 * c23;
  const double lambda2 = lambda4 * (1.0 + c44) - c24 * c24 * (1.0 + c11) -
                         c14 * c14 * (1.0 + c22) + 2.0 * c12 * c14 * c24;
  if (!(lambda4 > kSingularTolerance) || !(lambda1 > kSingularTolerance) ||
      !(lambda2 > kSingularTolerance))
    throw SingularCovariance("i4: Lambda1/Lambda2/Lambda4 <= 1e-12");
  return 4.0 / (std::numbers::pi * std::numbers::pi * std::sqrt(lambda4)) *
         detail::checked_asin(lambda0 / std::sqrt(lambda1 * lambda2), "i4");
}

inline double evaluate(IntegralKind kind, const ProjectedCovariance& c) {
  switch (kind) {
    case IntegralKind::I2: return i2(c);
    case IntegralKind::I3: return i3(c);
    case IntegralKind::I4: return i4(c);
  }
  return 0.0;
}

/// Closed forms for g(x) = x: I2 = c12, I3 = <beta gamma> = c23, I4 = c34.
inline double linear_i2(const ProjectedCovariance& c) { return c(1, 2); }
inline double linear_i3(const ProjectedCovariance& c) { return c(2, 3); }
inline double linear_i4(const ProjectedCovariance& c) { return c(3, 4); }

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Sample mean of the I2/I3/I4 integrand under N(0, c) for the scaled-erf
/// activation. Deterministic in `seed`.
inline McEstimate mc_expectation(const ProjectedCovariance& c, IntegralKind kind,
                                 std::int64_t n_samples, std::uint64_t seed) {
  const int dim = static_cast<int>(kind);
  detail::require_dim(c, dim, "mc_expectation");
  if (n_samples < 10000) throw std::invalid_argument("mc_expectation: need at least 1e4 samples");

  Eigen::MatrixXd cov = c.matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(cov + 1e-10 * Eigen::MatrixXd::Identity(dim, dim));
    if (llt.info() != Eigen::Success)
      throw DecompositionError("mc_expectation: covariance is not positive semi-definite: " +
                               c.to_string());
  }
  const Eigen::MatrixXd L = llt.matrixL();

  NormalSampler normal(make_engine(seed, Stream::MonteCarlo));
  Eigen::Vector4d z = Eigen::Vector4d::Zero(), f = Eigen::Vector4d::Zero();
  const auto g = [](double x) { return activate(Activation::ErfScaled, x); };
  const auto gp = [](double x) { return activate_derivative(Activation::ErfScaled, x); };

  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t n = 0; n < n_samples; ++n) {
    for (int a = 0; a < dim; ++a) z[a] = normal();
    for (int a = 0; a < dim; ++a) {
      double acc = 0.0;
      for (int b = 0; b <= a; ++b) acc += L(a, b) * z[b];
      f[a] = acc;
    }
    double v = 0.0;
    switch (kind) {
      case IntegralKind::I2: v = g(f[0]) * g(f[1]); break;
      case IntegralKind::I3: v = gp(f[0]) * f[1] * g(f[2]); break;
      case IntegralKind::I4: v = gp(f[0]) * gp(f[1]) * g(f[2]) * g(f[3]); break;
    }
    sum += v;
    sum_sq += v * v;
  }
  const double nd = static_cast<double>(n_samples);
  const double mean = sum / nd;
  const double var = std::max(0.0, (sum_sq - nd * mean * mean) / (nd - 1.0));
  return {mean, std::sqrt(var / nd)};
}

}  // namespace tscl
