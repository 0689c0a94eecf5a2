#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "streamal/harness.hpp"

using namespace streamal;

namespace {

// Small, fast scenario for unit-level harness checks.
ScenarioConfig tiny_config(double contamination = 0.0) {
  ScenarioConfig c;
  c.p = 4;
  c.warm_up = 40;
  c.budget = 8;
  c.test_size = 200;
  c.contamination = contamination;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("stabilization score hand values", "[harness]") {
  const int n = 9;
  std::vector<Eigen::VectorXd> history;
  history.push_back(Eigen::VectorXd::Zero(n));
  REQUIRE_FALSE(stabilization_score(history, 1).has_value());
  history.push_back(Eigen::VectorXd::Ones(n));
  const auto one_pair = stabilization_score(history, 1);
  REQUIRE(one_pair.has_value());
  REQUIRE(*one_pair == Catch::Approx(static_cast<double>(n)));

  // Identical consecutive predictions score zero.
  history.push_back(Eigen::VectorXd::Ones(n));
  history.push_back(Eigen::VectorXd::Ones(n));
  history.push_back(Eigen::VectorXd::Ones(n));
  REQUIRE(*stabilization_score(history, 3) == Catch::Approx(0.0));
}

TEST_CASE("stabilization score ignores calibration-point order", "[harness]") {
  Rng rng(5);
  Eigen::VectorXd a(6), b(6);
  for (int i = 0; i < 6; ++i) { a[i] = rng.normal(); b[i] = rng.normal(); }
  std::vector<Eigen::VectorXd> hist{a, b};
  std::vector<int> perm{3, 1, 5, 0, 4, 2};
  Eigen::VectorXd ap(6), bp(6);
  for (int i = 0; i < 6; ++i) { ap[i] = a[perm[i]]; bp[i] = b[perm[i]]; }
  std::vector<Eigen::VectorXd> permuted{ap, bp};
  REQUIRE(*stabilization_score(hist, 1) ==
          Catch::Approx(*stabilization_score(permuted, 1)).epsilon(1e-12));
}

TEST_CASE("zero budget yields the initial fit only", "[harness]") {
  ScenarioConfig c = tiny_config();
  c.budget = 0;
  const RunResult r = run_single(c, {StrategyKind::random, LossKind::ols(), false}, 1);
  REQUIRE(r.rmse_curve.size() == 1);
  REQUIRE(r.labels_spent == 0);
}

TEST_CASE("runs are bit-identical across repeats", "[harness]") {
  const ScenarioConfig c = tiny_config(0.1);
  const StrategySpec spec{StrategyKind::bounded_cdo, LossKind::huber(), false};
  RunOptions options;
  options.collect_trace = true;
  const RunResult a = run_single(c, spec, 42, options);
  const RunResult b = run_single(c, spec, 42, options);
  REQUIRE(a.rmse_curve == b.rmse_curve);
  REQUIRE(a.loocv_curve == b.loocv_curve);
  REQUIRE(a.acceptance_indices == b.acceptance_indices);
  REQUIRE(a.outliers_sampled == b.outliers_sampled);
  REQUIRE(a.trace.size() == b.trace.size());
  REQUIRE(a.labels_spent == c.budget);
  REQUIRE(a.rmse_curve.size() == static_cast<std::size_t>(c.budget) + 1);
}

TEST_CASE("curve and diagnostic lengths line up", "[harness]") {
  const ScenarioConfig c = tiny_config();
  const RunResult r = run_single(c, {StrategyKind::cdo, LossKind::ols(), false}, 3);
  REQUIRE(r.rmse_curve.size() == static_cast<std::size_t>(r.labels_spent) + 1);
  REQUIRE(r.stabilization_curve.size() == r.rmse_curve.size());
  REQUIRE(r.loocv_curve.size() == r.rmse_curve.size());
  // Stabilization needs w+1 = 4 models: steps 0..2 are sentinels.
  REQUIRE(std::isnan(r.stabilization_curve[0]));
  REQUIRE(std::isnan(r.stabilization_curve[2]));
  REQUIRE_FALSE(std::isnan(r.stabilization_curve[3]));
  REQUIRE_FALSE(std::isnan(r.loocv_curve[0]));  // LOO is available from step 0
  REQUIRE(r.acceptance_indices.size() == static_cast<std::size_t>(r.labels_spent));
  REQUIRE(std::is_sorted(r.acceptance_indices.begin(), r.acceptance_indices.end()));
  REQUIRE(r.acceptance_indices.front() > c.warm_up);
}

TEST_CASE("noise-free data drives loo to zero", "[harness]") {
  ScenarioConfig c = tiny_config();
  c.sigma_eps_normal = 1e-12;
  const RunResult r = run_single(c, {StrategyKind::random, LossKind::ols(), false}, 11);
  for (double v : r.loocv_curve) REQUIRE(v < 1e-8);
}

TEST_CASE("accepted cdo points clear the threshold at decision time", "[harness]") {
  ScenarioConfig c = tiny_config();
  RunOptions options;
  options.collect_trace = true;
  options.collect_diagnostics = false;
  const RunResult r = run_single(c, {StrategyKind::cdo, LossKind::ols(), false}, 21, options);
  int accepted = 0;
  for (const TraceRecord& rec : r.trace) {
    if (!rec.accepted) continue;
    ++accepted;
    REQUIRE(rec.statistic >= rec.gamma1);
  }
  REQUIRE(accepted == r.labels_spent);
}

TEST_CASE("bounded cdo never accepts above gamma2", "[harness]") {
  ScenarioConfig c = tiny_config(0.05);
  RunOptions options;
  options.collect_trace = true;
  options.collect_diagnostics = false;
  const RunResult r =
      run_single(c, {StrategyKind::bounded_cdo, LossKind::ols(), false}, 31, options);
  for (const TraceRecord& rec : r.trace) {
    if (rec.accepted) {
      REQUIRE(rec.statistic >= rec.gamma1);
      REQUIRE(rec.statistic <= rec.gamma2);
    }
  }
}

TEST_CASE("strategies sharing a replica see the same stream", "[harness]") {
  const ScenarioConfig c = tiny_config(0.2);
  // Same strategy kind with different estimators: identical decision rng and
  // identical stream, so the sampled points must coincide exactly.
  const RunResult ols = run_single(c, {StrategyKind::random, LossKind::ols(), false}, 5);
  const RunResult hub = run_single(c, {StrategyKind::random, LossKind::huber(), false}, 5);
  REQUIRE(ols.acceptance_indices == hub.acceptance_indices);
  REQUIRE(ols.outliers_sampled == hub.outliers_sampled);
  REQUIRE(ols.outliers_in_calibration == hub.outliers_in_calibration);

  // Different strategy kinds still share the calibration window.
  const RunResult cdo = run_single(c, {StrategyKind::cdo, LossKind::ols(), false}, 5);
  REQUIRE(cdo.outliers_in_calibration == ols.outliers_in_calibration);
}

TEST_CASE("weighted bounded cdo runs and counts fallbacks", "[harness]") {
  const ScenarioConfig c = tiny_config(0.1);
  const RunResult r =
      run_single(c, {StrategyKind::bounded_cdo, LossKind::tukey(), true}, 17);
  REQUIRE(r.labels_spent == c.budget);
  REQUIRE(r.weighted_fallbacks >= 0);
}

TEST_CASE("replication aggregates pad and report", "[harness]") {
  const ScenarioConfig c = tiny_config();
  const std::vector<StrategySpec> specs{{StrategyKind::random, LossKind::ols(), false}};

  SECTION("single replica means itself with zero std") {
    const auto agg = run_replicated(c, specs, 1);
    REQUIRE(agg.size() == 1);
    const RunResult r = run_single(c, specs[0], replica_seed(c.seed, 0));
    REQUIRE(agg[0].replicas == 1);
    for (std::size_t t = 0; t < agg[0].mean_rmse.size(); ++t) {
      REQUIRE(agg[0].mean_rmse[t] == r.rmse_curve[t]);
      REQUIRE(agg[0].std_rmse[t] == 0.0);
    }
  }

  SECTION("mean is invariant to replica order") {
    auto sets = run_replicated_full(c, specs, 6);
    const AggregateResult fwd = aggregate(sets[0], c.budget + 1);
    std::reverse(sets[0].runs.begin(), sets[0].runs.end());
    const AggregateResult rev = aggregate(sets[0], c.budget + 1);
    for (std::size_t t = 0; t < fwd.mean_rmse.size(); ++t) {
      REQUIRE(fwd.mean_rmse[t] == Catch::Approx(rev.mean_rmse[t]).epsilon(1e-12));
      REQUIRE(fwd.std_rmse[t] == Catch::Approx(rev.std_rmse[t]).epsilon(1e-12));
    }
  }

  SECTION("early-stopped curves are padded with their last value") {
    RunOptions options;
    options.stop_tol = 1e30;  // stops at the first available stabilization score
    const auto agg = run_replicated(c, specs, 3, options);
    REQUIRE(agg[0].mean_rmse.size() == static_cast<std::size_t>(c.budget) + 1);
    REQUIRE(agg[0].padded.back() == 3);
    REQUIRE(agg[0].padded.front() == 0);
  }
}

TEST_CASE("thread count does not change results", "[harness]") {
  const ScenarioConfig c = tiny_config(0.05);
  const std::vector<StrategySpec> specs{{StrategyKind::bounded_cdo, LossKind::ols(), false}};
  RunOptions serial, parallel;
  serial.threads = 1;
  parallel.threads = 4;
  serial.collect_diagnostics = parallel.collect_diagnostics = false;
  const auto a = run_replicated(c, specs, 8, serial);
  const auto b = run_replicated(c, specs, 8, parallel);
  REQUIRE(a[0].mean_rmse == b[0].mean_rmse);
  REQUIRE(a[0].std_rmse == b[0].std_rmse);
}

TEST_CASE("random-sampling harness agrees with an independent reference loop", "[harness]") {
  // Reference implementation: same primitives, independent control flow and
  // independent seeds. Means must agree within two pooled standard errors.
  ScenarioConfig c = tiny_config();
  c.test_size = 400;
  c.budget = 10;
  const int replicas = 200;

  RunOptions options;
  options.collect_diagnostics = false;
  const auto agg = run_replicated(c, {{StrategyKind::random, LossKind::ols(), false}},
                                  replicas, options);
  const double harness_mean = agg[0].mean_rmse.back();
  const double harness_sd = agg[0].std_rmse.back();

  double acc = 0.0, acc2 = 0.0;
  for (int r = 0; r < replicas; ++r) {
    Rng rng(mix_seed(0xFEEDull, static_cast<std::uint64_t>(r)));
    const StreamParams params = draw_betas(rng, c);
    StreamParams mutable_params = params;
    const LabeledSet init = gen_initial_design(c, mutable_params, rng);
    const LabeledSet test = gen_test_set(c, params, rng);
    Eigen::MatrixXd calib(c.warm_up, c.p);
    for (int i = 0; i < c.warm_up; ++i)
      calib.row(i) = next_observation(c, mutable_params, rng).x.transpose();
    const Whitener w = fit_whitener_from_data(calib);
    DesignState design = DesignState::make(w.whiten_rows(init.X), init.y);
    int labels = 0;
    while (labels < c.budget) {
      const Observation obs = next_observation(c, mutable_params, rng);
      if (rng.uniform() < 1.0 - c.alpha) continue;
      design = augment(design, w.whiten(obs.x), obs.y);
      ++labels;
    }
    const FittedModel m = fit_ols(design);
    const double e = rmse(predict(m, w.whiten_rows(test.X)), test.y);
    acc += e;
    acc2 += e * e;
  }
  const double ref_mean = acc / replicas;
  const double ref_var = (acc2 - replicas * ref_mean * ref_mean) / (replicas - 1);
  const double pooled_se =
      std::sqrt(harness_sd * harness_sd / replicas + ref_var / replicas);
  REQUIRE(std::abs(harness_mean - ref_mean) <= 2.0 * pooled_se);
}

TEST_CASE("stopping diagnostics report sentinel then values", "[harness]") {
  Rng rng(91);
  Eigen::MatrixXd Z(8, 2);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    Z(i, 0) = rng.normal();
    Z(i, 1) = rng.normal();
    y[i] = rng.normal();
  }
  const auto design = DesignState::make(Z, y);
  std::vector<Eigen::VectorXd> history{Eigen::VectorXd::Zero(4)};
  const StoppingDiagnostics d0 = stopping_diagnostics(history, 3, design, LossKind::ols());
  REQUIRE_FALSE(d0.stabilization.has_value());
  REQUIRE(std::isfinite(d0.loocv));
  for (int i = 0; i < 3; ++i) history.push_back(Eigen::VectorXd::Ones(4));
  const StoppingDiagnostics d1 = stopping_diagnostics(history, 3, design, LossKind::ols());
  REQUIRE(d1.stabilization.has_value());
}
