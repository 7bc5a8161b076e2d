#pragma once

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "trajgp/errors.hpp"

namespace trajgp {

// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
// together with the diagonal jitter that was required to factorize it.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  // Solves (L L^T) x = rhs.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(rhs);
    return lower.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  Eigen::MatrixXd solve_matrix(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd y = lower.triangularView<Eigen::Lower>().solve(rhs);
    return lower.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  // Solves L y = rhs only (useful for variance terms k^T C^-1 k = |L^-1 k|^2).
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& rhs) const {
    return lower.triangularView<Eigen::Lower>().solve(rhs);
  }

  Eigen::MatrixXd inverse() const {
    Eigen::MatrixXd inv = solve_matrix(
        Eigen::MatrixXd::Identity(lower.rows(), lower.cols()));
    // The two triangular solves leave asymmetry at round-off level.
    return 0.5 * (inv + inv.transpose());
  }

  // ln|L L^T| = 2 sum_i ln L_ii
  double log_det() const {
    return 2.0 * lower.diagonal().array().log().sum();
  }
};

// Factorizes a symmetric matrix, escalating diagonal jitter from
// 1e-10*scale by factors of 10 up to 1e-4*scale when the plain
// factorization fails. `scale` should be the prior variance (the kernel
// diagonal), so the jitter stays proportional to the signal level.
inline CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix,
                                           double scale) {
  const Eigen::Index n = matrix.rows();
  if (n == 0 || matrix.cols() != n) {
    throw InvalidInputError("cholesky_with_jitter: matrix must be square and non-empty");
  }
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 7; ++attempt) {
    Eigen::MatrixXd candidate = matrix;
    if (jitter > 0.0) {
      candidate.diagonal().array() += jitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(candidate);
    if (llt.info() == Eigen::Success &&
        (llt.matrixLLT().diagonal().array() > 0.0).all()) {
      return CholeskyFactor{Eigen::MatrixXd(llt.matrixL()), jitter};
    }
    jitter = (attempt == 0) ? 1e-10 * scale : jitter * 10.0;
  }
  std::ostringstream msg;
  msg << "covariance matrix is not positive definite even with diagonal jitter up to "
      << 1e-4 * scale
      << "; increase the observation noise variance or remove duplicate inputs";
  throw NumericalError(msg.str());
}

}  // namespace trajgp
