#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamal/errors.hpp"
#include "streamal/estimators.hpp"
#include "streamal/numstats.hpp"
#include "streamal/rng.hpp"

namespace streamal {

enum class StrategyKind { random, norm_threshold, cdo, bounded_cdo };

inline std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::random: return "random";
    case StrategyKind::norm_threshold: return "norm";
    case StrategyKind::cdo: return "cdo";
    case StrategyKind::bounded_cdo: return "bounded-cdo";
  }
  return "?";
}

// Unscaled prediction variance z^T (Z^T Z)^{-1} z of a (model-expanded) point.
inline double upv(const Eigen::VectorXd& z, const DesignState& design) {
  if (z.size() != design.dim()) throw std::invalid_argument("upv: dimension mismatch");
  return z.dot(design.gram_inverse() * z);
}

// (Z^T W Z)^{-1}; throws singular_error when the weights removed too much.
inline Eigen::MatrixXd weighted_gram_inverse(const DesignState& design,
                                             const Eigen::VectorXd& weights) {
  if (weights.size() != design.rows())
    throw std::invalid_argument("weighted_gram_inverse: weight count mismatch");
  const Eigen::MatrixXd gw =
      design.Z().transpose() * weights.asDiagonal() * design.Z();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gw);
  if (!lu.isInvertible())
    throw singular_error("weighted Gram is singular");
  return lu.solve(Eigen::MatrixXd::Identity(design.dim(), design.dim()));
}

// Weighted UPV z^T (Z^T W Z)^{-1} z; nullopt signals a singular weighted Gram
// so the caller can fall back to the unweighted statistic.
inline std::optional<double> upv_weighted(const Eigen::VectorXd& z, const DesignState& design,
                                          const Eigen::VectorXd& weights) {
  if (z.size() != design.dim())
    throw std::invalid_argument("upv_weighted: dimension mismatch");
  try {
    const Eigen::MatrixXd inv = weighted_gram_inverse(design, weights);
    return z.dot(inv * z);
  } catch (const singular_error&) {
    return std::nullopt;
  }
}

// KDE quantile of the whitened-norm statistics, P(||v|| >= Gamma) = alpha.
inline double estimate_norm_threshold(const Eigen::MatrixXd& V, double alpha) {
  if (V.rows() == 0) throw std::invalid_argument("estimate_norm_threshold: empty calibration");
  std::vector<double> norms(static_cast<std::size_t>(V.rows()));
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    norms[static_cast<std::size_t>(i)] = V.row(i).norm();
  return kde_quantile(KernelDensity(std::move(norms)), 1.0 - alpha);
}

namespace detail {

inline std::vector<double> upv_statistics(const Eigen::MatrixXd& V,
                                          const Eigen::MatrixXd& gram_inv) {
  std::vector<double> stats(static_cast<std::size_t>(V.rows()));
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    const Eigen::VectorXd v = V.row(i).transpose();
    stats[static_cast<std::size_t>(i)] = v.dot(gram_inv * v);
  }
  return stats;
}

}  // namespace detail

// KDE quantile of the calibration UPVs, P(UPV >= Gamma) = alpha.
inline double estimate_cdo_threshold(const Eigen::MatrixXd& V, const DesignState& design,
                                     double alpha) {
  auto stats = detail::upv_statistics(V, design.gram_inverse());
  return kde_quantile(KernelDensity(std::move(stats)), 1.0 - alpha);
}

struct Bounds {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  bool weighted_fallback = false;  // weighted Gram was singular, used plain UPV
};

// Gamma2 at the 100(1-c)% and Gamma1 at the 100(1-c-alpha)% KDE percentile of
// the calibration UPVs (weighted UPVs when weights are supplied). c = 0
// degenerates to unbounded CDO: Gamma2 = +infinity.
inline Bounds estimate_bounds(const Eigen::MatrixXd& V, const DesignState& design, double alpha,
                              double c, const Eigen::VectorXd* weights = nullptr) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("estimate_bounds: alpha must lie in (0, 1)");
  if (c < 0.0 || c + alpha >= 1.0)
    throw config_error("estimate_bounds: need 0 <= c and c + alpha < 1");

  Bounds b;
  Eigen::MatrixXd gram_inv;
  if (weights != nullptr) {
    try {
      gram_inv = weighted_gram_inverse(design, *weights);
    } catch (const singular_error&) {
      b.weighted_fallback = true;
      gram_inv = design.gram_inverse();
    }
  } else {
    gram_inv = design.gram_inverse();
  }

  const KernelDensity kd(detail::upv_statistics(V, gram_inv));
  b.gamma2 = c > 0.0 ? kde_quantile(kd, 1.0 - c) : std::numeric_limits<double>::infinity();
  b.gamma1 = kde_quantile(kd, 1.0 - c - alpha);
  return b;
}

// Per-strategy decision state. Immutable; refresh_thresholds returns a new
// state re-estimated against the augmented design. The whitened calibration
// set is retained in full for those refreshes.
struct StrategyState {
  StrategyKind kind = StrategyKind::random;
  double alpha = 0.0;
  double cutoff = 0.0;    // c, bounded CDO only
  bool weighted = false;  // decide/refresh with UPV_w instead of UPV
  double gamma = std::numeric_limits<double>::quiet_NaN();   // norm / cdo
  double gamma1 = std::numeric_limits<double>::quiet_NaN();  // bounded cdo
  double gamma2 = std::numeric_limits<double>::quiet_NaN();
  std::shared_ptr<const Eigen::MatrixXd> calibration;
};

inline StrategyState init_strategy(StrategyKind kind,
                                   std::shared_ptr<const Eigen::MatrixXd> calibration,
                                   const DesignState& design, const FittedModel& model,
                                   double alpha, double cutoff, bool weighted = false) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("init_strategy: alpha must lie in (0, 1)");
  StrategyState s;
  s.kind = kind;
  s.alpha = alpha;
  s.cutoff = cutoff;
  s.weighted = weighted;
  s.calibration = std::move(calibration);
  switch (kind) {
    case StrategyKind::random:
      break;
    case StrategyKind::norm_threshold:
      s.gamma = estimate_norm_threshold(*s.calibration, alpha);
      break;
    case StrategyKind::cdo:
      s.gamma = estimate_cdo_threshold(*s.calibration, design, alpha);
      break;
    case StrategyKind::bounded_cdo: {
      const Bounds b = estimate_bounds(*s.calibration, design, alpha, cutoff,
                                       weighted ? &model.weights : nullptr);
      s.gamma1 = b.gamma1;
      s.gamma2 = b.gamma2;
      break;
    }
  }
  return s;
}

struct QueryDecision {
  bool accept = false;
  double statistic = 0.0;        // r for random, ||z|| for norm, UPV otherwise
  bool weighted_fallback = false;
};

// Algorithm: random accepts iff r >= 1 - alpha; norm iff ||z|| >= Gamma;
// CDO iff UPV >= Gamma; bounded CDO iff Gamma1 <= UPV <= Gamma2.
inline QueryDecision decide(const StrategyState& state, const Eigen::VectorXd& z,
                            const DesignState& design, const FittedModel& model, Rng& rng) {
  QueryDecision d;
  switch (state.kind) {
    case StrategyKind::random:
      d.statistic = rng.uniform();
      d.accept = d.statistic >= 1.0 - state.alpha;
      return d;
    case StrategyKind::norm_threshold:
      d.statistic = z.norm();
      d.accept = d.statistic >= state.gamma;
      return d;
    case StrategyKind::cdo:
      d.statistic = upv(z, design);
      d.accept = d.statistic >= state.gamma;
      return d;
    case StrategyKind::bounded_cdo: {
      if (state.weighted) {
        const auto w = upv_weighted(z, design, model.weights);
        if (w) {
          d.statistic = *w;
        } else {
          d.statistic = upv(z, design);
          d.weighted_fallback = true;
        }
      } else {
        d.statistic = upv(z, design);
      }
      d.accept = state.gamma1 <= d.statistic && d.statistic <= state.gamma2;
      return d;
    }
  }
  return d;
}

// Random and norm-threshold states do not depend on the labeled design and
// are returned unchanged; CDO and bounded CDO re-estimate their thresholds
// from the retained calibration set against the augmented design.
inline StrategyState refresh_thresholds(const StrategyState& state, const DesignState& design,
                                        const FittedModel& model) {
  StrategyState s = state;
  switch (state.kind) {
    case StrategyKind::random:
    case StrategyKind::norm_threshold:
      break;
    case StrategyKind::cdo:
      s.gamma = estimate_cdo_threshold(*state.calibration, design, state.alpha);
      break;
    case StrategyKind::bounded_cdo: {
      const Bounds b = estimate_bounds(*state.calibration, design, state.alpha, state.cutoff,
                                       state.weighted ? &model.weights : nullptr);
      s.gamma1 = b.gamma1;
      s.gamma2 = b.gamma2;
      break;
    }
  }
  return s;
}

}  // namespace streamal
