#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "cavsim/config.hpp"
#include "cavsim/harness.hpp"

using namespace cavsim;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path);
    if (!file_) throw std::runtime_error("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string summary_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? out.substr(0, dot) : out) + ".summary.csv";
}

void write_trace_header(std::ostream& out) { out << "run_id,t,vehicle_id,class,lane,mode,p,v,u\n"; }

void write_trace_row(std::ostream& out, const TraceRow& r) {
  out << r.run_id << ',' << format_number(r.t) << ',' << r.vehicle_id << ',' << to_string(r.cls)
      << ',' << to_string(r.lane) << ',' << r.mode << ',' << format_number(r.p) << ','
      << format_number(r.v) << ',' << format_number(r.u) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-traffic intersection simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt, penetration, flow;
  bool trace = false;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("--config", config_path, "Scenario config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Override the seed");
  run_cmd->add_option("--dt", dt, "Override the step [s]");
  run_cmd->add_option("--penetration", penetration, "Override the CAV share");
  run_cmd->add_option("--flow", flow, "Override the flow [veh/h/lane]");
  run_cmd->add_option("--out", out_path, "Metrics CSV, or the trace with --trace");
  run_cmd->add_flag("--trace", trace, "Write the trajectory trace to --out, metrics to stdout");

  int jobs = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Penetration x flow sweep");
  sweep_cmd->add_option("--config", config_path, "Sweep config file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--seed", seed, "Run this single seed instead of the configured list");
  sweep_cmd->add_option("--dt", dt, "Override the step [s]");
  sweep_cmd->add_option("--jobs", jobs, "Worker threads (overrides the config)");
  sweep_cmd->add_option("--out", out_path,
                        "Per-run CSV; per-cell statistics go next to it as *.summary.csv");

  double delta_f = 10.0;
  bool no_af = false;
  auto* fig5_cmd = app.add_subcommand("replicate-fig5", "Two-vehicle following scenario");
  fig5_cmd->add_option("--delta-f", delta_f, "AF engagement distance [m]");
  fig5_cmd->add_flag("--no-af", no_af, "Keep the free-driving plan throughout");
  fig5_cmd->add_option("--dt", dt, "Sampling step [s]");
  fig5_cmd->add_option("--out", out_path, "Trace CSV");

  double sat_flow = 0.0;
  auto* sat_cmd = app.add_subcommand("saturation", "Degree of saturation for a flow rate");
  sat_cmd->add_option("--flow", sat_flow, "Flow rate [veh/h/lane]")->required();
  sat_cmd->add_option("--config", config_path, "Scenario config file")->check(CLI::ExistingFile);
  sat_cmd->add_option("--out", out_path, "Report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*run_cmd) {
      ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : load_scenario(config_path);
      if (seed) cfg.seed = *seed;
      if (dt) cfg.dt = *dt;
      if (penetration) cfg.penetration = *penetration;
      if (flow) cfg.flow_rate = *flow;
      cfg.validate();
      if (trace && out_path.empty()) throw ConfigError("--trace needs --out");
      std::optional<Output> trace_out;
      TraceSink sink;
      if (trace) {
        trace_out.emplace(out_path);
        write_trace_header(trace_out->stream());
        sink = [&](const TraceRow& r) { write_trace_row(trace_out->stream(), r); };
      }
      const MetricsReport r = run(cfg, sink, cfg.seed);
      Output metrics(trace ? "" : out_path);
      auto& os = metrics.stream();
      os << "rule,penetration,flow,seed,mean_energy_per_s,mean_travel_time_s,rear_end_violations,"
            "lateral_collisions,throughput_veh,frozen_veh,saturation_events,spawned,departed,"
            "in_system,waiting_to_enter\n"
         << to_string(cfg.rule.kind) << ',' << format_number(cfg.penetration) << ','
         << format_number(cfg.flow_rate) << ',' << cfg.seed << ','
         << format_number(r.mean_energy_per_s) << ',' << format_number(r.mean_travel_time) << ','
         << r.rear_end_violations << ',' << r.lateral_collisions << ',' << r.throughput << ','
         << r.frozen << ',' << r.saturation_events << ',' << r.spawned << ',' << r.departed << ','
         << r.in_system << ',' << r.waiting_to_enter << '\n';
      return r.halted ? kRuntimeError : 0;
    }

    if (*sweep_cmd) {
      SweepSpec spec = load_sweep(config_path);
      if (seed) spec.seeds = {*seed};
      if (dt) spec.base.dt = *dt;
      if (jobs > 0) spec.jobs = jobs;
      spec.validate();
      const SweepResult result = run_sweep(spec);
      {
        Output out(out_path);
        write_runs_csv(out.stream(), result);
      }
      if (!out_path.empty() && out_path != "-") {
        Output summary(summary_path(out_path));
        write_summary_csv(summary.stream(), result);
      }
      return 0;
    }

    if (*fig5_cmd) {
      Fig5Setup setup;
      setup.delta_f = delta_f;
      setup.adaptive_following = !no_af;
      if (dt) setup.dt = *dt;
      const Fig5Result r = replicate_fig5(setup);
      if (!out_path.empty()) {
        Output out(out_path);
        write_fig5_trace(out.stream(), r);
      }
      std::cout << "t_m=" << format_number(r.t_m) << '\n'
                << "af_engaged_at=" << format_number(r.af_engaged_at) << '\n'
                << "first_below_delta=" << format_number(r.first_below_delta) << '\n'
                << "min_gap=" << format_number(r.min_gap) << '\n'
                << "energy_half_u2=" << format_number(r.energy) << '\n';
      return 0;
    }

    if (*sat_cmd) {
      const ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : load_scenario(config_path);
      Output out(out_path);
      write_saturation(out.stream(), saturation(sat_flow, cfg));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
