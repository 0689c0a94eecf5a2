#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamal/errors.hpp"
#include "streamal/numstats.hpp"

namespace streamal {

enum class LossFamily { ols, huber, tukey };

// Loss selector with its tuning factor; k = k_factor * sigma_hat at fit time.
struct LossKind {
  LossFamily family = LossFamily::ols;
  double k_factor = 0.0;

  static LossKind ols() { return {LossFamily::ols, 0.0}; }
  static LossKind huber(double k_factor = 1.345) { return {LossFamily::huber, k_factor}; }
  static LossKind tukey(double k_factor = 4.685) { return {LossFamily::tukey, k_factor}; }

  bool robust() const { return family != LossFamily::ols; }

  std::string name() const {
    switch (family) {
      case LossFamily::ols: return "ols";
      case LossFamily::huber: return "huber";
      case LossFamily::tukey: return "tukey";
    }
    return "?";
  }
};

inline double huber_weight(double e, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("huber_weight: k must be positive");
  const double ae = std::abs(e);
  return ae <= k ? 1.0 : k / ae;
}

inline double tukey_weight(double e, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("tukey_weight: k must be positive");
  const double ae = std::abs(e);
  if (ae > k) return 0.0;
  const double u = 1.0 - (e / k) * (e / k);
  return u * u;
}

// rho(e) for the loss objective sum_i rho(e_i); used by tests and the
// debug-mode descent check in fit_robust.
inline double loss_rho(const LossKind& loss, double e, double k) {
  const double ae = std::abs(e);
  switch (loss.family) {
    case LossFamily::ols:
      return e * e;
    case LossFamily::huber:
      return ae <= k ? e * e : 2.0 * k * ae - k * k;
    case LossFamily::tukey: {
      if (ae > k) return k * k / 6.0;
      const double u = 1.0 - (e / k) * (e / k);
      return k * k / 6.0 * (1.0 - u * u * u);
    }
  }
  return 0.0;
}

struct FittedModel {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd weights;  // diagonal of W, evaluated at the returned coefficients
  double scale = 0.0;       // sigma_hat feeding k
  LossKind loss;
  bool converged = false;
  int iterations = 0;
};

// Labeled design in whitened coordinates with cached Gram and inverse.
// Immutable; augment() returns a new state with the Gram updated exactly as
// gram + z z^T and the inverse recomputed by a full solve.
class DesignState {
public:
  static DesignState make(Eigen::MatrixXd Z, Eigen::VectorXd y) {
    if (Z.rows() != y.size())
      throw std::invalid_argument("DesignState: row/response count mismatch");
    DesignState d;
    d.Z_ = std::move(Z);
    d.y_ = std::move(y);
    d.gram_ = d.Z_.transpose() * d.Z_;
    d.refresh_inverse();
    return d;
  }

  const Eigen::MatrixXd& Z() const { return Z_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  bool invertible() const { return invertible_; }
  Eigen::Index rows() const { return Z_.rows(); }
  Eigen::Index dim() const { return Z_.cols(); }

  const Eigen::MatrixXd& gram_inverse() const {
    if (!invertible_) throw singular_error("DesignState: singular Gram matrix");
    return gram_inverse_;
  }

private:
  void refresh_inverse() {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram_);
    invertible_ = lu.isInvertible();
    if (invertible_)
      gram_inverse_ = lu.solve(Eigen::MatrixXd::Identity(gram_.rows(), gram_.cols()));
    else
      gram_inverse_.resize(0, 0);
  }

  friend DesignState augment(const DesignState&, const Eigen::VectorXd&, double);

  Eigen::MatrixXd Z_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd gram_inverse_;
  bool invertible_ = false;
};

inline DesignState augment(const DesignState& design, const Eigen::VectorXd& z, double y) {
  if (z.size() != design.dim())
    throw std::invalid_argument("augment: dimension mismatch");
  DesignState d;
  d.Z_.resize(design.rows() + 1, design.dim());
  d.Z_.topRows(design.rows()) = design.Z();
  d.Z_.bottomRows(1) = z.transpose();
  d.y_.resize(design.rows() + 1);
  d.y_.head(design.rows()) = design.y();
  d.y_[design.rows()] = y;
  d.gram_ = design.gram() + z * z.transpose();
  d.refresh_inverse();
  return d;
}

namespace detail {

// sigma_hat: MAD scale, sample sd when the MAD degenerates. Returns 0 only
// for an exact fit (all residuals numerically zero).
inline double robust_sigma(const Eigen::VectorXd& residuals) {
  std::vector<double> e(residuals.data(), residuals.data() + residuals.size());
  try {
    return mad_scale(e);
  } catch (const degenerate_error&) {
    return sample_sd(e);
  }
}

// In-sample residuals from a p-coefficient fit shrink by roughly
// sqrt((l - p) / l); without this correction k = k_factor * sigma_hat is far
// too tight in the small-sample regime (l barely above p) and the robust
// estimators needlessly downweight clean observations.
inline double dof_factor(Eigen::Index rows, Eigen::Index dim) {
  return rows > dim ? std::sqrt(static_cast<double>(rows) / static_cast<double>(rows - dim))
                    : 1.0;
}

inline Eigen::VectorXd solve_weighted(const DesignState& design, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd& Z = design.Z();
  const Eigen::MatrixXd gw = Z.transpose() * w.asDiagonal() * Z;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gw);
  if (!lu.isInvertible())
    throw singular_error("fit_robust: weighted Gram became singular");
  return lu.solve(Z.transpose() * (w.asDiagonal() * design.y()));
}

}  // namespace detail

inline FittedModel fit_ols(const DesignState& design) {
  if (design.rows() < design.dim())
    throw singular_error("fit_ols: fewer rows than coefficients");
  if (!design.invertible()) throw singular_error("fit_ols: singular design");
  FittedModel m;
  m.loss = LossKind::ols();
  m.coefficients = design.gram_inverse() * (design.Z().transpose() * design.y());
  m.weights = Eigen::VectorXd::Ones(design.rows());
  const Eigen::VectorXd residuals = design.y() - design.Z() * m.coefficients;
  m.scale = detail::robust_sigma(residuals);
  m.converged = true;
  m.iterations = 0;
  return m;
}

// IRLS M-estimation: OLS start, then iterate scale re-estimation, weight
// evaluation and weighted least squares until the max coefficient change
// drops below 1e-8 (cap 50 iterations). A singular weighted Gram (Tukey can
// zero too many rows) falls back to the last nonsingular iterate with
// converged=false.
inline FittedModel fit_robust(const DesignState& design, const LossKind& loss) {
  if (!loss.robust()) return fit_ols(design);
  if (!(loss.k_factor > 0.0))
    throw std::invalid_argument("fit_robust: k_factor must be positive");

  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 50;

  FittedModel m = fit_ols(design);
  m.loss = loss;
  m.converged = false;

  const auto weight_of = [&](double e, double k) {
    return loss.family == LossFamily::huber ? huber_weight(e, k) : tukey_weight(e, k);
  };

  Eigen::VectorXd beta = m.coefficients;
  const double dof = detail::dof_factor(design.rows(), design.dim());
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    const Eigen::VectorXd residuals = design.y() - design.Z() * beta;
    const double sigma = dof * detail::robust_sigma(residuals);
    if (!(sigma > 0.0)) {  // exact fit; nothing left to reweigh
      m.converged = true;
      break;
    }
    const double k = loss.k_factor * sigma;
    Eigen::VectorXd w(design.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = weight_of(residuals[i], k);

    Eigen::VectorXd beta_next;
    try {
      beta_next = detail::solve_weighted(design, w);
    } catch (const singular_error&) {
      break;  // keep the last nonsingular iterate, converged stays false
    }
    const double delta = (beta_next - beta).cwiseAbs().maxCoeff();
    beta = beta_next;
    if (delta < kTol) {
      m.converged = true;
      ++iter;
      break;
    }
  }

  m.coefficients = beta;
  m.iterations = iter;
  const Eigen::VectorXd residuals = design.y() - design.Z() * beta;
  m.scale = dof * detail::robust_sigma(residuals);
  m.weights.resize(design.rows());
  if (m.scale > 0.0) {
    const double k = loss.k_factor * m.scale;
    for (Eigen::Index i = 0; i < design.rows(); ++i)
      m.weights[i] = weight_of(residuals[i], k);
  } else {
    m.weights.setOnes();  // exact fit
  }

#ifndef NDEBUG
  // Descent sanity: the loss objective at the fixed point, evaluated with the
  // final k, should not exceed the objective at the OLS start.
  if (m.converged && m.scale > 0.0) {
    const double k = loss.k_factor * m.scale;
    const Eigen::VectorXd e0 = design.y() - design.Z() * fit_ols(design).coefficients;
    double j_fit = 0.0, j_ols = 0.0;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
      j_fit += loss_rho(loss, residuals[i], k);
      j_ols += loss_rho(loss, e0[i], k);
    }
    assert(j_fit <= j_ols * (1.0 + 1e-9) + 1e-12);
  }
#endif
  return m;
}

inline FittedModel fit_model(const DesignState& design, const LossKind& loss) {
  return loss.robust() ? fit_robust(design, loss) : fit_ols(design);
}

inline Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.coefficients.size())
    throw std::invalid_argument("predict: dimension mismatch");
  return X * model.coefficients;
}

inline double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument("rmse: length mismatch");
  if (predictions.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((predictions - truth).squaredNorm() /
                   static_cast<double>(predictions.size()));
}

// Leave-one-out RMSE. OLS uses the hat-matrix shortcut e_i / (1 - h_ii);
// robust losses refit each leave-one-out subset (designs stay small, at most
// B + p + 2 rows, so the refits are cheap).
inline double loo_cv(const DesignState& design, const LossKind& loss) {
  const Eigen::Index l = design.rows();
  if (l < design.dim() + 1)
    throw std::invalid_argument("loo_cv: need at least p+1 rows");

  double acc = 0.0;
  if (!loss.robust()) {
    const FittedModel m = fit_ols(design);
    const Eigen::VectorXd residuals = design.y() - design.Z() * m.coefficients;
    const Eigen::MatrixXd& ginv = design.gram_inverse();
    for (Eigen::Index i = 0; i < l; ++i) {
      const Eigen::VectorXd zi = design.Z().row(i).transpose();
      const double h = zi.dot(ginv * zi);
      if (h >= 1.0 - 1e-10)
        throw degenerate_error("loo_cv: leverage ~1, LOO residual undefined");
      const double e = residuals[i] / (1.0 - h);
      acc += e * e;
    }
  } else {
    for (Eigen::Index i = 0; i < l; ++i) {
      Eigen::MatrixXd Zi(l - 1, design.dim());
      Eigen::VectorXd yi(l - 1);
      Zi.topRows(i) = design.Z().topRows(i);
      Zi.bottomRows(l - 1 - i) = design.Z().bottomRows(l - 1 - i);
      yi.head(i) = design.y().head(i);
      yi.tail(l - 1 - i) = design.y().tail(l - 1 - i);
      const FittedModel m = fit_robust(DesignState::make(std::move(Zi), std::move(yi)), loss);
      const double e = design.y()[i] - design.Z().row(i).dot(m.coefficients);
      acc += e * e;
    }
  }
  return std::sqrt(acc / static_cast<double>(l));
}

}  // namespace streamal
