#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "streamal/errors.hpp"
#include "streamal/rng.hpp"

namespace streamal {

// Full description of one simulated experiment. Defaults reproduce the
// outlier-free reference scenario: p=20 standard-normal inputs, unit noise,
// budget 50, warm-up 500, alpha = c = 5%.
struct ScenarioConfig {
  int p = 20;
  double sigma_x_normal = 1.0;
  double sigma_x_outlier = 3.0;
  double sigma_eps_normal = 1.0;
  double sigma_eps_outlier = 3.0;
  std::pair<double, double> beta_normal_range{-5.0, 5.0};
  std::pair<double, double> beta_outlier_range{10.0, 15.0};
  double contamination = 0.0;
  int budget = 50;
  int warm_up = 500;
  double alpha = 0.05;
  double cutoff = 0.05;  // protection cut-off c
  int initial_design_size = 0;  // 0 = default p + 2
  bool contaminated_init = false;
  int test_size = 1000;
  long long stream_cap = 1000000;
  std::uint64_t seed = 12345;
  bool fresh_outlier_beta = false;  // redraw the outlier regime per outlier
  bool center_whitening = false;    // subtract the calibration mean when whitening
  bool clean_warmup = false;        // calibration set from historical (outlier-free) data

  int initial_rows() const { return initial_design_size > 0 ? initial_design_size : p + 2; }

  void validate() const {
    if (p < 1) throw config_error("scenario: p must be >= 1");
    if (!(sigma_x_normal > 0.0 && sigma_x_outlier > 0.0 && sigma_eps_normal > 0.0 &&
          sigma_eps_outlier > 0.0))
      throw config_error("scenario: all standard deviations must be positive");
    if (beta_normal_range.first > beta_normal_range.second ||
        beta_outlier_range.first > beta_outlier_range.second)
      throw config_error("scenario: beta range bounds out of order");
    if (contamination < 0.0 || contamination > 1.0)
      throw config_error("scenario: contamination must lie in [0, 1]");
    if (budget < 1) throw config_error("scenario: budget must be >= 1");
    if (warm_up < p + 1) throw config_error("scenario: warm_up must be >= p + 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("scenario: alpha must lie in (0, 1)");
    if (cutoff < 0.0 || cutoff + alpha >= 1.0)
      throw config_error("scenario: need 0 <= c and c + alpha < 1");
    if (initial_rows() < p + 1)
      throw config_error("scenario: initial design needs at least p + 1 rows");
    if (test_size < 1) throw config_error("scenario: test_size must be >= 1");
    if (stream_cap <= warm_up)
      throw config_error("scenario: stream_cap must exceed warm_up");
  }
};

// One stream item. The outlier flag is ground truth for diagnostics only and
// is never visible to strategies or estimators.
struct Observation {
  Eigen::VectorXd x;
  double y = 0.0;
  bool is_outlier = false;
};

// Regime coefficients, drawn once per simulation run.
struct StreamParams {
  Eigen::VectorXd beta_normal;
  Eigen::VectorXd beta_outlier;
};

namespace detail {

inline Eigen::VectorXd uniform_vector(Rng& rng, int p, std::pair<double, double> range) {
  Eigen::VectorXd b(p);
  for (int i = 0; i < p; ++i)
    b[i] = range.first + (range.second - range.first) * rng.uniform();
  return b;
}

}  // namespace detail

inline StreamParams draw_betas(Rng& rng, const ScenarioConfig& config) {
  StreamParams params;
  params.beta_normal = detail::uniform_vector(rng, config.p, config.beta_normal_range);
  params.beta_outlier = detail::uniform_vector(rng, config.p, config.beta_outlier_range);
  return params;
}

// Draw order is pinned for reproducibility: contamination coin, optional
// fresh outlier betas, p input normals, one noise normal.
inline Observation next_observation(const ScenarioConfig& config, StreamParams& params,
                                    Rng& rng) {
  Observation obs;
  obs.is_outlier = rng.uniform() < config.contamination;
  if (obs.is_outlier && config.fresh_outlier_beta)
    params.beta_outlier = detail::uniform_vector(rng, config.p, config.beta_outlier_range);
  const double sigma_x = obs.is_outlier ? config.sigma_x_outlier : config.sigma_x_normal;
  const double sigma_eps = obs.is_outlier ? config.sigma_eps_outlier : config.sigma_eps_normal;
  const Eigen::VectorXd& beta = obs.is_outlier ? params.beta_outlier : params.beta_normal;
  obs.x.resize(config.p);
  for (int i = 0; i < config.p; ++i) obs.x[i] = sigma_x * rng.normal();
  obs.y = obs.x.dot(beta) + sigma_eps * rng.normal();
  return obs;
}

struct LabeledSet {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<bool> outlier;  // diagnostics only

  int outlier_count() const {
    int n = 0;
    for (bool f : outlier) n += f ? 1 : 0;
    return n;
  }
};

// Initial random design of initial_rows() observations. With
// contaminated_init=false outlier draws are rejected and redrawn, so the
// design is clean by construction; otherwise they are kept as they come.
inline LabeledSet gen_initial_design(const ScenarioConfig& config, StreamParams& params,
                                     Rng& rng) {
  const int n = config.initial_rows();
  LabeledSet set;
  set.X.resize(n, config.p);
  set.y.resize(n);
  set.outlier.resize(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    Observation obs = next_observation(config, params, rng);
    while (!config.contaminated_init && obs.is_outlier)
      obs = next_observation(config, params, rng);
    set.X.row(i) = obs.x.transpose();
    set.y[i] = obs.y;
    set.outlier[static_cast<std::size_t>(i)] = obs.is_outlier;
  }
  return set;
}

// Clean test set: normal regime only, no contamination coin involved.
inline LabeledSet gen_test_set(const ScenarioConfig& config, const StreamParams& params,
                               Rng& rng) {
  LabeledSet set;
  set.X.resize(config.test_size, config.p);
  set.y.resize(config.test_size);
  set.outlier.resize(static_cast<std::size_t>(config.test_size), false);
  for (int i = 0; i < config.test_size; ++i) {
    for (int j = 0; j < config.p; ++j) set.X(i, j) = config.sigma_x_normal * rng.normal();
    set.y[i] = set.X.row(i).dot(params.beta_normal) + config.sigma_eps_normal * rng.normal();
  }
  return set;
}

// Seed-derivation tags. Betas, initial design + test set, raw stream and
// strategy decisions each get an independent generator so the raw stream can
// be reproduced (and dumped) without replaying the design draws.
inline constexpr std::uint64_t kBetaTag = 0xB5E7A5ull;
inline constexpr std::uint64_t kDesignTag = 0xDE516Eull;
inline constexpr std::uint64_t kStreamTag = 0x5742EA4ull;
inline constexpr std::uint64_t kDecisionTag = 0xDEC1DEull;
inline constexpr std::uint64_t kCalibrationTag = 0xCA11Bull;

// Writes `count` stream observations as delimited text, one per line:
// p feature columns, the response, the outlier flag. This is the exact
// warm-up + active sequence a run with the same seed consumes.
inline void dump_stream(std::ostream& out, const ScenarioConfig& config, std::uint64_t seed,
                        long long count) {
  Rng beta_rng(mix_seed(seed, kBetaTag));
  StreamParams params = draw_betas(beta_rng, config);
  Rng stream_rng(mix_seed(seed, kStreamTag));
  char buf[32];
  for (long long n = 0; n < count; ++n) {
    const Observation obs = next_observation(config, params, stream_rng);
    for (int j = 0; j < config.p; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", obs.x[j]);
      out << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", obs.y);
    out << buf << ',' << (obs.is_outlier ? 1 : 0) << '\n';
  }
}

}  // namespace streamal
