#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "streamal/errors.hpp"

namespace streamal {

// Sample covariance (1/(m-1)) * sum (x_i - xbar)(x_i - xbar)^T of an m x p
// row matrix. Requires m >= p + 1 so the estimate can have full rank.
inline Eigen::MatrixXd estimate_covariance(const Eigen::MatrixXd& calibration) {
  const auto m = calibration.rows();
  const auto p = calibration.cols();
  if (m <= p)
    throw singular_error("estimate_covariance: need more rows than columns (m >= p+1)");
  const Eigen::RowVectorXd mu = calibration.colwise().mean();
  const Eigen::MatrixXd centered = calibration.rowwise() - mu;
  Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(m - 1);
  sigma = 0.5 * (sigma + sigma.transpose());  // kill asymmetry from rounding
  return sigma;
}

// Eigendecomposition-based whitening map z = Lambda^{-1/2} U^T (x - mean).
// Mean subtraction only happens when a mean was supplied (centering is off by
// default; the simulated data is zero-mean by construction). Eigenvalues are
// stored descending with a deterministic sign convention so the transform is
// reproducible bit-for-bit.
struct Whitener {
  Eigen::MatrixXd eigenvectors;  // columns of U, one per eigenvalue
  Eigen::VectorXd eigenvalues;   // descending, clamped at eigen_floor
  Eigen::VectorXd mean;          // size 0 => no centering
  std::size_t source_size = 0;
  bool degenerate = false;  // an eigenvalue had to be clamped

  Eigen::Index dim() const { return eigenvectors.rows(); }

  Eigen::VectorXd whiten(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw std::invalid_argument("Whitener: dimension mismatch");
    Eigen::VectorXd centered = mean.size() > 0 ? (x - mean).eval() : x;
    Eigen::VectorXd z = eigenvectors.transpose() * centered;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] /= std::sqrt(eigenvalues[i]);
    return z;
  }

  Eigen::MatrixXd whiten_rows(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != dim()) throw std::invalid_argument("Whitener: dimension mismatch");
    Eigen::MatrixXd centered =
        mean.size() > 0 ? (rows.rowwise() - mean.transpose()).eval() : rows;
    Eigen::MatrixXd z = centered * eigenvectors;
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) /= std::sqrt(eigenvalues[j]);
    return z;
  }
};

inline Whitener fit_whitener(const Eigen::MatrixXd& sigma, std::size_t source_size = 0) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument("fit_whitener: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
  if (solver.info() != Eigen::Success)
    throw singular_error("fit_whitener: eigendecomposition failed");

  const Eigen::Index p = sigma.rows();
  Whitener w;
  w.source_size = source_size;
  w.eigenvalues.resize(p);
  w.eigenvectors.resize(p, p);
  // Eigen returns ascending order; store descending.
  for (Eigen::Index i = 0; i < p; ++i) {
    w.eigenvalues[i] = solver.eigenvalues()[p - 1 - i];
    w.eigenvectors.col(i) = solver.eigenvectors().col(p - 1 - i);
  }
  // Sign convention: first component of non-negligible magnitude positive.
  for (Eigen::Index j = 0; j < p; ++j) {
    const double scale = w.eigenvectors.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < p; ++i) {
      const double v = w.eigenvectors(i, j);
      if (std::abs(v) > 1e-12 * scale) {
        if (v < 0.0) w.eigenvectors.col(j) = -w.eigenvectors.col(j);
        break;
      }
    }
  }
  // Clamp: eigen_floor = 1e-10 * largest eigenvalue (unit fallback when the
  // matrix is identically zero, flagged degenerate either way).
  const double lambda_max = w.eigenvalues[0];
  const double floor = lambda_max > 0.0 ? 1e-10 * lambda_max : 1.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (w.eigenvalues[i] < floor) {
      w.eigenvalues[i] = floor;
      w.degenerate = true;
    }
  }
  return w;
}

// Convenience: covariance + whitener from calibration rows, optionally
// remembering the calibration mean for centering.
inline Whitener fit_whitener_from_data(const Eigen::MatrixXd& calibration, bool center = false) {
  Whitener w = fit_whitener(estimate_covariance(calibration),
                            static_cast<std::size_t>(calibration.rows()));
  if (center) w.mean = calibration.colwise().mean().transpose();
  return w;
}

inline Eigen::VectorXd whiten(const Whitener& w, const Eigen::VectorXd& x) {
  return w.whiten(x);
}

}  // namespace streamal
