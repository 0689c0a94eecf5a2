// streamal command-line front end: run experiments from a config file, list
// the scenario presets, or dump a raw observation stream for oracle checks.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "streamal/cli.hpp"
#include "streamal/stream.hpp"

namespace {

void print_presets(std::ostream& out) {
  out << "available presets (p=20, B=50, m=500, alpha=c=0.05 unless overridden):\n";
  for (const streamal::Preset& p : streamal::presets()) {
    out << "  " << p.name << "  [" << p.note << "]\n";
    out << "    contamination=" << p.config.contamination
        << " contaminated_init=" << (p.config.contaminated_init ? "true" : "false")
        << " replicas=" << p.replicas << " strategies=";
    for (std::size_t i = 0; i < p.strategies.size(); ++i) {
      if (i) out << '|';
      out << p.strategies[i].label();
    }
    out << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamal: robust online active learning for contaminated streams"};
  app.require_subcommand(1);

  std::string config_path;
  int replicas = -1;
  std::string out_dir;
  bool dump_traces = false;
  double stop_tol = -1.0;
  std::int64_t seed = -1;

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--replicas", replicas, "override the replica count");
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--dump-traces", dump_traces, "write per-decision trace files");
  run->add_option("--stop-tol", stop_tol, "stop once the stabilization score drops below TOL");
  run->add_option("--seed", seed, "override the scenario seed");

  auto* presets_cmd = app.add_subcommand("presets", "list scenario presets");

  std::string stream_source;
  long long stream_count = 1000;
  std::string stream_out = "-";
  auto* dump = app.add_subcommand("dump-stream",
                                  "dump raw stream observations as delimited text");
  dump->add_option("config", stream_source, "config file or preset name")->required();
  dump->add_option("--count", stream_count, "number of observations");
  dump->add_option("--out", stream_out, "output file ('-' for stdout)");
  dump->add_option("--seed", seed, "override the scenario seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets_cmd->parsed()) {
      print_presets(std::cout);
      return 0;
    }

    if (run->parsed()) {
      streamal::ExperimentSpec spec = streamal::parse_config_file(config_path);
      if (replicas > 0) spec.replicas = replicas;
      if (!out_dir.empty()) spec.output_dir = out_dir;
      if (dump_traces) spec.dump_traces = true;
      if (stop_tol > 0.0) spec.stop_tol = stop_tol;
      if (seed >= 0) spec.scenario.seed = static_cast<std::uint64_t>(seed);
      return streamal::run_command(spec);
    }

    // dump-stream: accept either a config file or a bare preset name.
    streamal::ScenarioConfig scenario;
    if (std::filesystem::exists(stream_source)) {
      scenario = streamal::parse_config_file(stream_source).scenario;
    } else if (const streamal::Preset* p = streamal::find_preset(stream_source)) {
      scenario = p->config;
    } else {
      throw streamal::config_error("'" + stream_source +
                                   "' is neither a config file nor a preset; presets: " +
                                   streamal::preset_names());
    }
    if (seed >= 0) scenario.seed = static_cast<std::uint64_t>(seed);
    if (stream_count < 1) throw streamal::config_error("--count must be >= 1");

    if (stream_out == "-") {
      streamal::dump_stream(std::cout, scenario, scenario.seed, stream_count);
    } else {
      std::ofstream out(stream_out);
      if (!out) throw streamal::config_error("cannot write '" + stream_out + "'");
      streamal::dump_stream(out, scenario, scenario.seed, stream_count);
    }
    return 0;
  } catch (const streamal::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
