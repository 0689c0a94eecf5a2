#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "streamal/errors.hpp"
#include "streamal/estimators.hpp"
#include "streamal/rng.hpp"
#include "streamal/strategies.hpp"
#include "streamal/stream.hpp"
#include "streamal/whitening.hpp"

namespace streamal {

struct StrategySpec {
  StrategyKind kind = StrategyKind::random;
  LossKind loss = LossKind::ols();
  bool weighted = false;

  std::string label() const {
    std::string s = strategy_name(kind) + "_" + loss.name();
    if (weighted) s += "_w";
    return s;
  }
};

struct RunOptions {
  bool collect_diagnostics = true;  // stabilization + LOO-CV curves
  bool collect_trace = false;       // per-decision trace records
  std::optional<double> stop_tol;   // halt once stabilization < tol
  int stabilization_window = 3;
  bool add_intercept = false;
  // Model expansion applied to whitened points (identity when empty);
  // add_intercept prepends a constant column on top of it.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> expansion;
  int threads = 0;  // run_replicated parallelism; 0 = auto
};

struct TraceRecord {
  int step = 0;               // labels spent at decision time
  long long stream_index = 0; // 1-based, warm-up included
  double statistic = 0.0;
  double gamma1 = std::numeric_limits<double>::quiet_NaN();
  double gamma2 = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
};

struct RunResult {
  std::vector<double> rmse_curve;           // labels_spent + 1 entries
  std::vector<double> stabilization_curve;  // NaN until w+1 models exist
  std::vector<double> loocv_curve;          // NaN where LOO degenerates
  int labels_spent = 0;
  long long stream_position = 0;
  int outliers_sampled = 0;
  int outliers_in_calibration = 0;
  int outliers_in_initial_design = 0;
  int weighted_fallbacks = 0;
  std::vector<long long> acceptance_indices;
  std::vector<TraceRecord> trace;
};

// Windowed mean of the summed squared prediction differences between the w
// most recent consecutive model pairs; nullopt until w+1 models exist.
inline std::optional<double> stabilization_score(
    const std::vector<Eigen::VectorXd>& prediction_history, int window) {
  if (window < 1) throw std::invalid_argument("stabilization_score: window must be >= 1");
  const auto n = prediction_history.size();
  if (n < static_cast<std::size_t>(window) + 1) return std::nullopt;
  double acc = 0.0;
  for (int j = 0; j < window; ++j) {
    const auto& current = prediction_history[n - 1 - static_cast<std::size_t>(j)];
    const auto& previous = prediction_history[n - 2 - static_cast<std::size_t>(j)];
    acc += (current - previous).squaredNorm();
  }
  return acc / static_cast<double>(window);
}

struct StoppingDiagnostics {
  std::optional<double> stabilization;
  double loocv = std::numeric_limits<double>::quiet_NaN();
};

// Both Appendix-style proxies at the current state; recorded per step, never
// acted on unless a stop tolerance was requested.
inline StoppingDiagnostics stopping_diagnostics(
    const std::vector<Eigen::VectorXd>& prediction_history, int window,
    const DesignState& design, const LossKind& loss) {
  StoppingDiagnostics d;
  d.stabilization = stabilization_score(prediction_history, window);
  try {
    d.loocv = loo_cv(design, loss);
  } catch (const degenerate_error&) {
  } catch (const singular_error&) {
  }
  return d;
}

namespace detail {

inline Eigen::VectorXd expand_point(const RunOptions& options, const Eigen::VectorXd& z) {
  Eigen::VectorXd v = options.expansion ? options.expansion(z) : z;
  if (!options.add_intercept) return v;
  Eigen::VectorXd out(v.size() + 1);
  out[0] = 1.0;
  out.tail(v.size()) = v;
  return out;
}

inline Eigen::MatrixXd expand_rows(const RunOptions& options, const Eigen::MatrixXd& rows) {
  if (!options.expansion && !options.add_intercept) return rows;
  Eigen::MatrixXd out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const Eigen::VectorXd v = expand_point(options, rows.row(i).transpose());
    if (i == 0) out.resize(rows.rows(), v.size());
    out.row(i) = v.transpose();
  }
  return out;
}

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace detail

// One full pass of the bounded-CDO-style online loop for a single replica:
// warm-up, covariance estimation and whitening, initial fit and thresholds,
// then stream until the budget or the stream cap is exhausted. Deterministic
// in (config, spec, seed); strategies sharing a seed see the same stream.
inline RunResult run_single(const ScenarioConfig& config, const StrategySpec& spec,
                            std::uint64_t seed, const RunOptions& options = {}) {
  const bool want_stab = options.collect_diagnostics || options.stop_tol.has_value();

  RunResult result;
  DesignState design;
  FittedModel model;
  StrategyState state;
  Whitener whitener;
  StreamParams stream_params;
  Eigen::MatrixXd test_Z;
  Eigen::VectorXd test_y;
  std::shared_ptr<Eigen::MatrixXd> calibration;
  Rng stream_rng;

  bool ready = false;
  for (int attempt = 0; attempt < 5 && !ready; ++attempt) {
    const std::uint64_t attempt_seed =
        attempt == 0 ? seed : mix_seed(seed, 0xA77E0000ull + static_cast<std::uint64_t>(attempt));
    Rng beta_rng(mix_seed(attempt_seed, kBetaTag));
    Rng design_rng(mix_seed(attempt_seed, kDesignTag));
    stream_rng = Rng(mix_seed(attempt_seed, kStreamTag));

    const StreamParams params = draw_betas(beta_rng, config);
    StreamParams design_params = params;  // fresh_outlier_beta mutates per path
    stream_params = params;

    const LabeledSet initial = gen_initial_design(config, design_params, design_rng);
    const LabeledSet test = gen_test_set(config, params, design_rng);

    Eigen::MatrixXd calib_raw(config.warm_up, config.p);
    int calib_outliers = 0;
    if (config.clean_warmup) {
      // Historical outlier-free calibration data; does not consume the stream.
      ScenarioConfig clean = config;
      clean.contamination = 0.0;
      StreamParams clean_params = stream_params;
      Rng calib_rng(mix_seed(attempt_seed, kCalibrationTag));
      for (int i = 0; i < config.warm_up; ++i)
        calib_raw.row(i) = next_observation(clean, clean_params, calib_rng).x.transpose();
    } else {
      for (int i = 0; i < config.warm_up; ++i) {
        const Observation obs = next_observation(config, stream_params, stream_rng);
        calib_raw.row(i) = obs.x.transpose();
        calib_outliers += obs.is_outlier ? 1 : 0;
      }
    }

    whitener = fit_whitener_from_data(calib_raw, config.center_whitening);
    const Eigen::MatrixXd Z0 = detail::expand_rows(options, whitener.whiten_rows(initial.X));
    design = DesignState::make(Z0, initial.y);
    if (!design.invertible()) continue;  // reseed and retry

    calibration = std::make_shared<Eigen::MatrixXd>(
        detail::expand_rows(options, whitener.whiten_rows(calib_raw)));
    test_Z = detail::expand_rows(options, whitener.whiten_rows(test.X));
    test_y = test.y;
    result.outliers_in_calibration = calib_outliers;
    result.outliers_in_initial_design = initial.outlier_count();
    ready = true;
  }
  if (!ready)
    throw singular_error("run_single: initial design singular after 5 reseeds");

  Rng decision_rng(
      mix_seed(seed, kDecisionTag + static_cast<std::uint64_t>(spec.kind)));

  model = fit_model(design, spec.loss);
  state = init_strategy(spec.kind, calibration, design, model, config.alpha, config.cutoff,
                        spec.weighted);

  std::vector<Eigen::VectorXd> prediction_history;
  const auto record_step = [&] {
    result.rmse_curve.push_back(rmse(predict(model, test_Z), test_y));
    if (!want_stab) return std::optional<double>{};
    prediction_history.push_back(predict(model, *calibration));
    std::optional<double> stab;
    if (options.collect_diagnostics) {
      const StoppingDiagnostics d = stopping_diagnostics(
          prediction_history, options.stabilization_window, design, spec.loss);
      stab = d.stabilization;
      result.stabilization_curve.push_back(stab ? *stab : detail::nan_value());
      result.loocv_curve.push_back(d.loocv);
    } else {
      stab = stabilization_score(prediction_history, options.stabilization_window);
    }
    return stab;
  };
  record_step();

  // Stream position; a historical (clean_warmup) calibration set does not
  // consume stream observations.
  long long i = config.clean_warmup ? 0 : config.warm_up;
  while (result.labels_spent < config.budget && i < config.stream_cap) {
    const Observation obs = next_observation(config, stream_params, stream_rng);
    ++i;
    const Eigen::VectorXd z = detail::expand_point(options, whitener.whiten(obs.x));
    const QueryDecision d = decide(state, z, design, model, decision_rng);
    result.weighted_fallbacks += d.weighted_fallback ? 1 : 0;
    if (options.collect_trace) {
      TraceRecord rec;
      rec.step = result.labels_spent;
      rec.stream_index = i;
      rec.statistic = d.statistic;
      switch (spec.kind) {
        case StrategyKind::random:
          break;
        case StrategyKind::norm_threshold:
        case StrategyKind::cdo:
          rec.gamma1 = state.gamma;
          rec.gamma2 = std::numeric_limits<double>::infinity();
          break;
        case StrategyKind::bounded_cdo:
          rec.gamma1 = state.gamma1;
          rec.gamma2 = state.gamma2;
          break;
      }
      rec.accepted = d.accept;
      result.trace.push_back(rec);
    }
    if (!d.accept) continue;

    design = augment(design, z, obs.y);  // label queried and paid for
    ++result.labels_spent;
    result.acceptance_indices.push_back(i);
    result.outliers_sampled += obs.is_outlier ? 1 : 0;
    model = fit_model(design, spec.loss);
    state = refresh_thresholds(state, design, model);
    const std::optional<double> stab = record_step();
    if (options.stop_tol && stab && *stab < *options.stop_tol) break;
  }
  result.stream_position = i;
  return result;
}

struct ReplicaSet {
  std::string scenario;
  StrategySpec spec;
  std::vector<RunResult> runs;
};

struct AggregateResult {
  std::string scenario;
  StrategySpec spec;
  int replicas = 0;
  std::vector<double> mean_rmse;
  std::vector<double> std_rmse;
  std::vector<int> padded;  // per step: replicas whose curve ended earlier
};

inline std::uint64_t replica_seed(std::uint64_t base_seed, int replica) {
  return mix_seed(base_seed, static_cast<std::uint64_t>(replica));
}

inline int resolve_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  if (const char* env = std::getenv("STREAMAL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  return n;
}

// Aggregate per-step mean and sample standard deviation, padding unexhausted
// curves with their final value so every aggregate is rectangular.
inline AggregateResult aggregate(const ReplicaSet& set, int curve_length) {
  AggregateResult agg;
  agg.scenario = set.scenario;
  agg.spec = set.spec;
  agg.replicas = static_cast<int>(set.runs.size());
  agg.mean_rmse.assign(static_cast<std::size_t>(curve_length), 0.0);
  agg.std_rmse.assign(static_cast<std::size_t>(curve_length), 0.0);
  agg.padded.assign(static_cast<std::size_t>(curve_length), 0);

  const auto value_at = [](const RunResult& run, int t) {
    const auto& c = run.rmse_curve;
    return t < static_cast<int>(c.size()) ? c[static_cast<std::size_t>(t)] : c.back();
  };

  for (int t = 0; t < curve_length; ++t) {
    double sum = 0.0;
    for (const RunResult& run : set.runs) {
      sum += value_at(run, t);
      if (t >= static_cast<int>(run.rmse_curve.size()))
        agg.padded[static_cast<std::size_t>(t)] += 1;
    }
    const double mean = sum / static_cast<double>(agg.replicas);
    agg.mean_rmse[static_cast<std::size_t>(t)] = mean;
    if (agg.replicas >= 2) {
      double ss = 0.0;
      for (const RunResult& run : set.runs) {
        const double d = value_at(run, t) - mean;
        ss += d * d;
      }
      agg.std_rmse[static_cast<std::size_t>(t)] =
          std::sqrt(ss / static_cast<double>(agg.replicas - 1));
    }
  }
  return agg;
}

// Replicated execution. Replica r uses seed hash(config.seed, r); within a
// replica every strategy sees the identical raw stream, so learning curves
// are paired across strategies. Replicas run in parallel; results are merged
// in replica order, so the output is independent of the thread count.
inline std::vector<ReplicaSet> run_replicated_full(const ScenarioConfig& config,
                                                   const std::vector<StrategySpec>& specs,
                                                   int replicas,
                                                   const RunOptions& options = {},
                                                   const std::string& scenario_name = "custom") {
  if (replicas < 1) throw config_error("run_replicated: need at least one replica");
  if (specs.empty()) throw config_error("run_replicated: need at least one strategy");

  std::vector<ReplicaSet> sets(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    sets[s].scenario = scenario_name;
    sets[s].spec = specs[s];
    sets[s].runs.resize(static_cast<std::size_t>(replicas));
  }

  const int threads = std::min(resolve_threads(options.threads), replicas);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  const auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicas) return;
      try {
        const std::uint64_t seed = replica_seed(config.seed, r);
        for (std::size_t s = 0; s < specs.size(); ++s)
          sets[s].runs[static_cast<std::size_t>(r)] =
              run_single(config, specs[s], seed, options);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return sets;
}

inline std::vector<AggregateResult> run_replicated(const ScenarioConfig& config,
                                                   const std::vector<StrategySpec>& specs,
                                                   int replicas,
                                                   const RunOptions& options = {},
                                                   const std::string& scenario_name = "custom") {
  const auto sets = run_replicated_full(config, specs, replicas, options, scenario_name);
  std::vector<AggregateResult> out;
  out.reserve(sets.size());
  for (const auto& set : sets) out.push_back(aggregate(set, config.budget + 1));
  return out;
}

}  // namespace streamal
