#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "hdid/errors.hpp"
#include "hdid/rng.hpp"

namespace hdid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Dense symmetric matrix. Construction checks squareness, dimension >= 1 and
/// symmetry to 1e-12 relative to the largest entry.
class SymMatrix {
 public:
  explicit SymMatrix(MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.rows() != values_.cols()) {
      throw InvalidParameter("SymMatrix: expected a non-empty square matrix");
    }
    const double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
    if ((values_ - values_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InvalidParameter("SymMatrix: matrix is not symmetric");
    }
  }

  Index dim() const { return values_.rows(); }
  const MatrixXd& matrix() const { return values_; }
  double operator()(Index i, Index j) const { return values_(i, j); }

 private:
  MatrixXd values_;
};

/// Draw from N(mean, variance). A zero variance returns `mean` without consuming the stream.
inline double sample_normal(double mean, double variance, RngStream& rng) {
  if (!(variance >= 0.0)) {
    throw InvalidParameter("sample_normal: variance must be >= 0, got " + std::to_string(variance));
  }
  if (variance == 0.0) return mean;
  return mean + std::sqrt(variance) * rng.normal();
}

/// Draw from Gamma(shape, rate); mean shape / rate.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw InvalidParameter("sample_gamma: shape and rate must be positive, got shape=" +
                           std::to_string(shape) + " rate=" + std::to_string(rate));
  }
  return rng.gamma(shape) / rate;
}

/// Draw X ~ IG(shape, rate), i.e. 1/X ~ Gamma(shape, rate); mean rate / (shape - 1).
inline double sample_inverse_gamma(double shape, double rate, RngStream& rng) {
  return 1.0 / sample_gamma(shape, rate, rng);
}

inline double log_normal_density(double x, double mean, double variance) {
  if (!(variance > 0.0)) {
    throw InvalidParameter("log_normal_density: variance must be > 0");
  }
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * d * d / variance;
}

/// exp(log_ratio) clamped to [1e-300, 1e300]; used for every Bayes factor.
inline double clamped_exp(double log_ratio) {
  constexpr double kLogMax = 690.7755278982137;  // ln(1e300)
  return std::exp(std::clamp(log_ratio, -kLogMax, kLogMax));
}

/// Draw from N(mean, covariance). Cholesky first; for PSD-but-singular input
/// falls back to a symmetric eigendecomposition with negative eigenvalues
/// (within -1e-8 * trace) clamped to zero.
inline VectorXd sample_mvn(const VectorXd& mean, const SymMatrix& covariance, RngStream& rng) {
  const Index d = covariance.dim();
  if (mean.size() != d) throw InvalidParameter("sample_mvn: mean/covariance dimension mismatch");

  VectorXd z(d);
  for (Index i = 0; i < d; ++i) z(i) = rng.normal();

  Eigen::LLT<MatrixXd> llt(covariance.matrix());
  if (llt.info() == Eigen::Success) return mean + llt.matrixL() * z;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(covariance.matrix());
  if (eig.info() != Eigen::Success) throw NumericalError("sample_mvn: eigendecomposition failed");
  const double trace = covariance.matrix().trace();
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest < -1e-8 * std::abs(trace)) {
    throw NumericalError("sample_mvn: covariance is not positive semidefinite (smallest eigenvalue " +
                         std::to_string(smallest) + ")");
  }
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return mean + eig.eigenvectors() * root.cwiseProduct(z);
}

/// Posterior of a Gaussian linear regression with known residual variance and
/// independent Gaussian priors N(0, 1/prior_precision_i):
///   V = (gram / resvar + diag(prior_precision))^{-1},  mean = V * cross / resvar,
/// where gram = D^T D and cross = D^T targets.
struct GaussianPosterior {
  VectorXd mean;
  Eigen::LLT<MatrixXd> precision_llt;  // factor of V^{-1}

  MatrixXd covariance() const {
    const Index d = mean.size();
    return precision_llt.solve(MatrixXd::Identity(d, d));
  }

  VectorXd draw(RngStream& rng) const {
    const Index d = mean.size();
    VectorXd z(d);
    for (Index i = 0; i < d; ++i) z(i) = rng.normal();
    // V^{-1} = L L^T, so L^{-T} z has covariance V.
    return mean + precision_llt.matrixU().solve(z);
  }
};

inline GaussianPosterior regression_posterior(const MatrixXd& gram, const VectorXd& cross, double resvar,
                                              const VectorXd& prior_precision) {
  if (!(resvar > 0.0)) throw InvalidParameter("regression_posterior: residual variance must be > 0");
  MatrixXd precision = gram / resvar;
  precision.diagonal() += prior_precision;
  GaussianPosterior post{VectorXd(), Eigen::LLT<MatrixXd>(precision)};
  if (post.precision_llt.info() != Eigen::Success) {
    throw NumericalError("regression_posterior: posterior precision is not positive definite");
  }
  post.mean = post.precision_llt.solve(cross / resvar);
  return post;
}

}  // namespace hdid
