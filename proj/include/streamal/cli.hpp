#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "streamal/errors.hpp"
#include "streamal/harness.hpp"
#include "streamal/stream.hpp"

namespace streamal {

struct ExperimentSpec {
  std::string scenario_name = "custom";
  ScenarioConfig scenario;
  std::vector<StrategySpec> strategies;
  int replicas = 1000;
  std::string output_dir = ".";
  bool dump_traces = false;
  bool dump_curves = false;
  bool diagnostics = true;
  std::optional<double> stop_tol;

  void validate() const {
    scenario.validate();
    if (replicas < 1) throw config_error("experiment: replicas must be >= 1");
    if (strategies.empty()) throw config_error("experiment: need at least one strategy");
    if (stop_tol && !(*stop_tol > 0.0))
      throw config_error("experiment: stop_tol must be positive");
  }
};

struct Preset {
  std::string name;
  std::string note;
  ScenarioConfig config;
  std::vector<StrategySpec> strategies;
  int replicas = 1000;
};

namespace detail {

inline std::vector<StrategySpec> comparison_strategies() {
  return {
      {StrategyKind::random, LossKind::ols(), false},
      {StrategyKind::norm_threshold, LossKind::ols(), false},
      {StrategyKind::cdo, LossKind::ols(), false},
      {StrategyKind::bounded_cdo, LossKind::ols(), false},
      {StrategyKind::bounded_cdo, LossKind::huber(), false},
      {StrategyKind::bounded_cdo, LossKind::tukey(), false},
  };
}

inline std::vector<StrategySpec> upvw_strategies() {
  return {
      {StrategyKind::bounded_cdo, LossKind::huber(), false},
      {StrategyKind::bounded_cdo, LossKind::huber(), true},
      {StrategyKind::bounded_cdo, LossKind::tukey(), false},
      {StrategyKind::bounded_cdo, LossKind::tukey(), true},
  };
}

}  // namespace detail

// Scenario presets mirroring the published experiments: contamination levels
// 0 / 0.275% / 1% / 5%, optionally with a contaminated initial design, plus
// the weighted-UPV comparison. Everything else stays at the shared defaults
// (p=20, B=50, m=500, alpha=c=5%, initial design p+2). Presets calibrate on
// historical outlier-free warm-up data; set clean_warmup=false in a
// [scenario] section to fill the calibration set from the raw stream.
inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    std::vector<Preset> t;
    const auto scenario = [](double contamination, bool dirty_init) {
      ScenarioConfig c;
      c.contamination = contamination;
      c.contaminated_init = dirty_init;
      c.clean_warmup = true;
      return c;
    };
    t.push_back({"paper-clean", "no outliers", scenario(0.0, false),
                 detail::comparison_strategies(), 1000});
    t.push_back({"paper-0275", "0.275% outliers", scenario(0.00275, false),
                 detail::comparison_strategies(), 1000});
    t.push_back({"paper-1pct", "1% outliers", scenario(0.01, false),
                 detail::comparison_strategies(), 1000});
    t.push_back({"paper-5pct", "5% outliers", scenario(0.05, false),
                 detail::comparison_strategies(), 1000});
    t.push_back({"paper-1pct-dirty-init", "1% outliers, contaminated initial design",
                 scenario(0.01, true), detail::comparison_strategies(), 1000});
    t.push_back({"paper-5pct-dirty-init", "5% outliers, contaminated initial design",
                 scenario(0.05, true), detail::comparison_strategies(), 1000});
    t.push_back({"paper-upvw-1pct", "1% outliers, UPV vs weighted UPV",
                 scenario(0.01, false), detail::upvw_strategies(), 1000});
    return t;
  }();
  return table;
}

inline const Preset* find_preset(const std::string& name) {
  for (const Preset& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

inline std::string preset_names() {
  std::string out;
  for (const Preset& p : presets()) {
    if (!out.empty()) out += ", ";
    out += p.name;
  }
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] inline void fail_at(int line, const std::string& message) {
  throw config_error("config line " + std::to_string(line) + ": " + message);
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) fail_at(line, "trailing characters in number '" + v + "'");
    return d;
  } catch (const config_error&) {
    throw;
  } catch (...) {
    fail_at(line, "expected a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) fail_at(line, "trailing characters in integer '" + v + "'");
    return i;
  } catch (const config_error&) {
    throw;
  } catch (...) {
    fail_at(line, "expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  fail_at(line, "expected a boolean, got '" + v + "'");
}

inline StrategySpec parse_strategy(const std::string& value, int line) {
  const auto tokens = split_ws(value);
  if (tokens.size() < 2)
    fail_at(line, "strategy needs '<kind> <loss> [weighted] [k=<x>]'");
  StrategySpec spec;
  if (tokens[0] == "random") spec.kind = StrategyKind::random;
  else if (tokens[0] == "norm") spec.kind = StrategyKind::norm_threshold;
  else if (tokens[0] == "cdo") spec.kind = StrategyKind::cdo;
  else if (tokens[0] == "bounded-cdo") spec.kind = StrategyKind::bounded_cdo;
  else fail_at(line, "unknown strategy kind '" + tokens[0] +
                     "' (random, norm, cdo, bounded-cdo)");
  if (tokens[1] == "ols") spec.loss = LossKind::ols();
  else if (tokens[1] == "huber") spec.loss = LossKind::huber();
  else if (tokens[1] == "tukey") spec.loss = LossKind::tukey();
  else fail_at(line, "unknown loss '" + tokens[1] + "' (ols, huber, tukey)");
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (tokens[i] == "weighted") {
      spec.weighted = true;
    } else if (tokens[i].rfind("k=", 0) == 0) {
      if (!spec.loss.robust()) fail_at(line, "k= only applies to huber/tukey");
      spec.loss.k_factor = parse_double(tokens[i].substr(2), line);
      if (!(spec.loss.k_factor > 0.0)) fail_at(line, "k must be positive");
    } else {
      fail_at(line, "unknown strategy option '" + tokens[i] + "'");
    }
  }
  return spec;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_strategy(const StrategySpec& spec) {
  std::string out = strategy_name(spec.kind) + " " + spec.loss.name();
  if (spec.loss.family == LossFamily::huber && spec.loss.k_factor != 1.345)
    out += " k=" + format_double(spec.loss.k_factor);
  if (spec.loss.family == LossFamily::tukey && spec.loss.k_factor != 4.685)
    out += " k=" + format_double(spec.loss.k_factor);
  if (spec.weighted) out += " weighted";
  return out;
}

}  // namespace detail

// Line-oriented `key = value` configuration with [section] headers and '#'
// comments. Unknown sections and keys are hard errors. Sections:
//   [experiment]  scenario / replicas / seed / output / dump_traces /
//                 dump_curves / diagnostics / stop_tol
//   [scenario]    base (preset to start from) plus any ScenarioConfig field
//   [strategies]  strategy = <kind> <loss> [weighted] [k=<x>]   (repeatable)
inline ExperimentSpec parse_config(const std::string& text) {
  ExperimentSpec spec;
  ScenarioConfig scenario;  // working copy, re-based when a preset is named
  std::vector<StrategySpec> strategies;         // explicit [strategies] entries
  std::vector<StrategySpec> preset_strategies;  // defaults from the named preset
  std::optional<std::string> preset_name;
  bool scenario_section = false;
  bool replicas_set = false;
  std::optional<std::uint64_t> seed_override;

  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string s = detail::trim(raw);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') detail::fail_at(line, "unterminated section header");
      section = s.substr(1, s.size() - 2);
      if (section != "experiment" && section != "scenario" && section != "strategies")
        detail::fail_at(line, "unknown section [" + section + "]");
      if (section == "scenario") scenario_section = true;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) detail::fail_at(line, "expected 'key = value'");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) detail::fail_at(line, "empty key");
    if (value.empty()) detail::fail_at(line, "empty value for '" + key + "'");
    if (section.empty()) detail::fail_at(line, "key '" + key + "' outside any section");

    if (section == "experiment") {
      if (key == "scenario") {
        const Preset* p = find_preset(value);
        if (!p)
          detail::fail_at(line, "unknown preset '" + value +
                                    "'; valid presets: " + preset_names());
        preset_name = value;
        scenario = p->config;
        if (!replicas_set) spec.replicas = p->replicas;
        preset_strategies = p->strategies;
      } else if (key == "replicas") {
        spec.replicas = static_cast<int>(detail::parse_int(value, line));
        replicas_set = true;
      } else if (key == "seed") {
        seed_override = static_cast<std::uint64_t>(detail::parse_int(value, line));
      } else if (key == "output") {
        spec.output_dir = value;
      } else if (key == "dump_traces") {
        spec.dump_traces = detail::parse_bool(value, line);
      } else if (key == "dump_curves") {
        spec.dump_curves = detail::parse_bool(value, line);
      } else if (key == "diagnostics") {
        spec.diagnostics = detail::parse_bool(value, line);
      } else if (key == "stop_tol") {
        spec.stop_tol = detail::parse_double(value, line);
      } else {
        detail::fail_at(line, "unknown key '" + key + "' in [experiment]");
      }
    } else if (section == "scenario") {
      if (key == "base") {
        const Preset* p = find_preset(value);
        if (!p)
          detail::fail_at(line, "unknown preset '" + value +
                                    "'; valid presets: " + preset_names());
        scenario = p->config;
      } else if (key == "p") scenario.p = static_cast<int>(detail::parse_int(value, line));
      else if (key == "sigma_x_normal") scenario.sigma_x_normal = detail::parse_double(value, line);
      else if (key == "sigma_x_outlier") scenario.sigma_x_outlier = detail::parse_double(value, line);
      else if (key == "sigma_eps_normal") scenario.sigma_eps_normal = detail::parse_double(value, line);
      else if (key == "sigma_eps_outlier") scenario.sigma_eps_outlier = detail::parse_double(value, line);
      else if (key == "beta_normal_min") scenario.beta_normal_range.first = detail::parse_double(value, line);
      else if (key == "beta_normal_max") scenario.beta_normal_range.second = detail::parse_double(value, line);
      else if (key == "beta_outlier_min") scenario.beta_outlier_range.first = detail::parse_double(value, line);
      else if (key == "beta_outlier_max") scenario.beta_outlier_range.second = detail::parse_double(value, line);
      else if (key == "contamination") scenario.contamination = detail::parse_double(value, line);
      else if (key == "budget") scenario.budget = static_cast<int>(detail::parse_int(value, line));
      else if (key == "warm_up") scenario.warm_up = static_cast<int>(detail::parse_int(value, line));
      else if (key == "alpha") scenario.alpha = detail::parse_double(value, line);
      else if (key == "cutoff") scenario.cutoff = detail::parse_double(value, line);
      else if (key == "initial_design_size") scenario.initial_design_size = static_cast<int>(detail::parse_int(value, line));
      else if (key == "contaminated_init") scenario.contaminated_init = detail::parse_bool(value, line);
      else if (key == "test_size") scenario.test_size = static_cast<int>(detail::parse_int(value, line));
      else if (key == "stream_cap") scenario.stream_cap = detail::parse_int(value, line);
      else if (key == "seed") scenario.seed = static_cast<std::uint64_t>(detail::parse_int(value, line));
      else if (key == "fresh_outlier_beta") scenario.fresh_outlier_beta = detail::parse_bool(value, line);
      else if (key == "center_whitening") scenario.center_whitening = detail::parse_bool(value, line);
      else if (key == "clean_warmup") scenario.clean_warmup = detail::parse_bool(value, line);
      else detail::fail_at(line, "unknown key '" + key + "' in [scenario]");
    } else {  // strategies
      if (key != "strategy")
        detail::fail_at(line, "unknown key '" + key + "' in [strategies]");
      strategies.push_back(detail::parse_strategy(value, line));
    }
  }

  if (!preset_name && !scenario_section) throw config_error("config: missing scenario");
  spec.scenario_name = preset_name ? *preset_name : "custom";
  spec.scenario = scenario;
  if (seed_override) spec.scenario.seed = *seed_override;
  // An explicit [strategies] section replaces the preset defaults.
  spec.strategies = strategies.empty() ? preset_strategies : strategies;
  spec.validate();
  return spec;
}

inline ExperimentSpec parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Canonical text form; parse_config(serialize_config(spec)) reproduces spec.
inline std::string serialize_config(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "[experiment]\n";
  if (spec.scenario_name != "custom") out << "scenario = " << spec.scenario_name << "\n";
  out << "replicas = " << spec.replicas << "\n";
  out << "output = " << spec.output_dir << "\n";
  out << "dump_traces = " << (spec.dump_traces ? "true" : "false") << "\n";
  out << "dump_curves = " << (spec.dump_curves ? "true" : "false") << "\n";
  out << "diagnostics = " << (spec.diagnostics ? "true" : "false") << "\n";
  if (spec.stop_tol) out << "stop_tol = " << detail::format_double(*spec.stop_tol) << "\n";
  const ScenarioConfig& c = spec.scenario;
  out << "\n[scenario]\n";
  out << "p = " << c.p << "\n";
  out << "sigma_x_normal = " << detail::format_double(c.sigma_x_normal) << "\n";
  out << "sigma_x_outlier = " << detail::format_double(c.sigma_x_outlier) << "\n";
  out << "sigma_eps_normal = " << detail::format_double(c.sigma_eps_normal) << "\n";
  out << "sigma_eps_outlier = " << detail::format_double(c.sigma_eps_outlier) << "\n";
  out << "beta_normal_min = " << detail::format_double(c.beta_normal_range.first) << "\n";
  out << "beta_normal_max = " << detail::format_double(c.beta_normal_range.second) << "\n";
  out << "beta_outlier_min = " << detail::format_double(c.beta_outlier_range.first) << "\n";
  out << "beta_outlier_max = " << detail::format_double(c.beta_outlier_range.second) << "\n";
  out << "contamination = " << detail::format_double(c.contamination) << "\n";
  out << "budget = " << c.budget << "\n";
  out << "warm_up = " << c.warm_up << "\n";
  out << "alpha = " << detail::format_double(c.alpha) << "\n";
  out << "cutoff = " << detail::format_double(c.cutoff) << "\n";
  out << "initial_design_size = " << c.initial_design_size << "\n";
  out << "contaminated_init = " << (c.contaminated_init ? "true" : "false") << "\n";
  out << "test_size = " << c.test_size << "\n";
  out << "stream_cap = " << c.stream_cap << "\n";
  out << "seed = " << c.seed << "\n";
  out << "fresh_outlier_beta = " << (c.fresh_outlier_beta ? "true" : "false") << "\n";
  out << "center_whitening = " << (c.center_whitening ? "true" : "false") << "\n";
  out << "\n[strategies]\n";
  for (const StrategySpec& s : spec.strategies)
    out << "strategy = " << detail::format_strategy(s) << "\n";
  return out.str();
}

// results.csv: one row per (strategy, step), floats at 17 significant digits,
// rows sorted by (strategy, estimator, weighted, step).
inline void export_csv(const std::vector<AggregateResult>& results, std::ostream& out) {
  if (results.empty()) throw config_error("export_csv: no results");
  std::vector<const AggregateResult*> order;
  order.reserve(results.size());
  for (const auto& r : results) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    const auto key = [](const AggregateResult* r) {
      return std::make_tuple(strategy_name(r->spec.kind), r->spec.loss.name(),
                             r->spec.weighted);
    };
    return key(a) < key(b);
  });
  out << "scenario,strategy,estimator,weighted,step,mean_rmse,std_rmse,n_replicas,n_padded\n";
  for (const AggregateResult* r : order) {
    for (std::size_t t = 0; t < r->mean_rmse.size(); ++t) {
      out << r->scenario << ',' << strategy_name(r->spec.kind) << ',' << r->spec.loss.name()
          << ',' << (r->spec.weighted ? 1 : 0) << ',' << t << ','
          << detail::format_double(r->mean_rmse[t]) << ','
          << detail::format_double(r->std_rmse[t]) << ',' << r->replicas << ','
          << r->padded[t] << '\n';
    }
  }
}

inline void export_csv(const std::vector<AggregateResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("export_csv: cannot write '" + path + "'");
  export_csv(results, out);
}

namespace detail {

inline void write_curves(const std::vector<ReplicaSet>& sets, std::ostream& out) {
  out << "scenario,strategy,estimator,weighted,replica,step,rmse,stabilization,loocv\n";
  for (const ReplicaSet& set : sets) {
    for (std::size_t r = 0; r < set.runs.size(); ++r) {
      const RunResult& run = set.runs[r];
      for (std::size_t t = 0; t < run.rmse_curve.size(); ++t) {
        out << set.scenario << ',' << strategy_name(set.spec.kind) << ','
            << set.spec.loss.name() << ',' << (set.spec.weighted ? 1 : 0) << ',' << r << ','
            << t << ',' << format_double(run.rmse_curve[t]) << ',';
        out << (t < run.stabilization_curve.size() ? format_double(run.stabilization_curve[t])
                                                   : "nan");
        out << ',';
        out << (t < run.loocv_curve.size() ? format_double(run.loocv_curve[t]) : "nan");
        out << '\n';
      }
    }
  }
}

inline void write_trace(const ReplicaSet& set, std::ostream& out) {
  out << "# replica step stream_index statistic gamma1 gamma2 accepted\n";
  for (std::size_t r = 0; r < set.runs.size(); ++r) {
    for (const TraceRecord& rec : set.runs[r].trace) {
      out << r << ' ' << rec.step << ' ' << rec.stream_index << ' '
          << format_double(rec.statistic) << ' ' << format_double(rec.gamma1) << ' '
          << format_double(rec.gamma2) << ' ' << (rec.accepted ? 1 : 0) << '\n';
    }
  }
}

}  // namespace detail

// Executes the experiment and writes results.csv (plus optional per-replica
// curves and decision traces) under the output directory.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.
inline int run_command(const ExperimentSpec& spec, std::ostream& log = std::cerr) {
  try {
    spec.validate();
    RunOptions options;
    options.collect_diagnostics = spec.diagnostics;
    options.collect_trace = spec.dump_traces;
    options.stop_tol = spec.stop_tol;

    const auto sets = run_replicated_full(spec.scenario, spec.strategies, spec.replicas,
                                          options, spec.scenario_name);
    std::vector<AggregateResult> aggregates;
    aggregates.reserve(sets.size());
    for (const auto& set : sets) aggregates.push_back(aggregate(set, spec.scenario.budget + 1));

    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    export_csv(aggregates, (dir / "results.csv").string());

    if (spec.dump_curves) {
      std::ofstream out(dir / "curves.csv");
      if (!out) throw std::runtime_error("cannot write curves.csv");
      detail::write_curves(sets, out);
    }
    if (spec.dump_traces) {
      for (const auto& set : sets) {
        std::ofstream out(dir / ("trace_" + set.spec.label() + ".txt"));
        if (!out) throw std::runtime_error("cannot write trace file");
        detail::write_trace(set, out);
      }
    }
    return 0;
  } catch (const config_error& e) {
    log << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace streamal
