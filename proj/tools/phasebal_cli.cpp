#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phasebal/config_io.hpp"
#include "phasebal/errors.hpp"
#include "phasebal/experiments.hpp"

using namespace phasebal;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--out", c.out, "output directory (overrides output_dir)");
  cmd->add_option("--seed", c.seed, "scenario seed");
  cmd->add_option("--algorithm", c.algorithm, "proposed or greedy")
      ->check(CLI::IsMember({"proposed", "greedy"}));
  cmd->add_option("--mode", c.mode, "ideal or nonideal")->check(CLI::IsMember({"ideal", "nonideal"}));
}

RunConfig resolve(const Common& c) {
  RunConfig run = c.config.empty() ? default_run_config() : load_run_config(c.config);
  if (!c.out.empty()) run.output_dir = c.out;
  if (c.seed) run.scenario.seed = *c.seed;
  if (c.algorithm) run.algorithm = algorithm_from_string(*c.algorithm);
  if (c.mode) run.mode = storage_mode_from_string(*c.mode);
  return run;
}

std::ofstream open_output(const RunConfig& run, const std::string& name) {
  fs::create_directories(run.output_dir);
  std::ofstream os(fs::path(run.output_dir) / name, std::ios::binary);
  if (!os) throw InvalidConfig("cannot write " + (fs::path(run.output_dir) / name).string());
  return os;
}

int cmd_run(const Common& c) {
  const RunConfig run = resolve(c);
  const auto res = run_and_write(run);
  std::cout << summary_to_json(run, res.summary) << '\n';
  const auto& s = res.summary;
  if (!s.states_in_bounds || !s.balance_ok || !s.complementarity_ok) {
    std::cerr << "feasibility check failed\n";
    return 4;
  }
  return 0;
}

int cmd_sweep(const Common& c, const std::string& parameter, const std::vector<double>& values,
              int replications) {
  const RunConfig run = resolve(c);
  validate_run_config(run);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < replications; ++i) seeds.push_back(run.scenario.seed + static_cast<std::uint64_t>(i));
  const SweepResult sweep = run_sweep(run, parameter, values, seeds);
  auto os = open_output(run, "sweep_" + parameter + ".csv");
  write_sweep_csv(os, sweep);
  write_sweep_csv(std::cout, sweep);
  return 0;
}

int cmd_admm_trace(const Common& c, const std::vector<double>& rhos, int iterations,
                   std::optional<double> energy_state) {
  const RunConfig run = resolve(c);
  const auto trace = run_admm_trace(representative_problem(run, energy_state), rhos, iterations);
  auto os = open_output(run, "admm_trace.csv");
  write_admm_trace_csv(os, trace);
  std::cout << "reference objective " << format_double(trace.reference_objective)
            << ", oracle objective " << format_double(trace.oracle_objective) << '\n';
  for (double rho : rhos) {
    for (const auto& r : trace.rows) {
      if (r.rho == rho && (r.k == 20 || r.k == iterations)) {
        std::cout << "rho " << rho << " k " << r.k << " relative gap " << format_double(r.relative_gap)
                  << '\n';
      }
    }
  }
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (trace.gap_increases[i] > 0) {
      std::cerr << "warning: rho " << rhos[i] << ": gap grew in " << trace.gap_increases[i]
                << " iterations after k = 20\n";
    }
  }
  return 0;
}

int cmd_alloc_check(const Common& c, double s_total, double grid) {
  const RunConfig run = resolve(c);
  validate_run_config(run);
  const auto rep = check_equal_allocation(run, s_total, grid);
  auto os = open_output(run, "allocation.csv");
  write_allocation_csv(os, rep);
  std::cout << "best allocation";
  for (double v : rep.best.s_max) std::cout << ' ' << format_double(v);
  std::cout << " bound " << format_double(rep.best.bound) << '\n';
  if (!rep.argmin_is_equal) {
    std::cerr << "bound minimum is not at the equal split\n";
    return 4;
  }
  return 0;
}

int cmd_validate(const Common& c) {
  const RunConfig run = resolve(c);
  validate_run_config(run);
  const auto ranges = derive_ranges(run.system);
  const auto params = make_controller_params(run.system, ranges, run.mode, run.v_values);
  nlohmann::ordered_json j;
  j["status"] = "ok";
  j["mode"] = to_string(run.mode);
  nlohmann::ordered_json phases = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < run.system.size(); ++i) {
    const auto& r = ranges.phases[i];
    nlohmann::ordered_json p = {{"l_min", r.l_min},   {"l_max", r.l_max},   {"cp_min", r.cp_min},
                                {"cp_max", r.cp_max}, {"dp_min", r.dp_min}, {"dp_max", r.dp_max}};
    if (const auto& ctl = params.phases[i]) {
      p["v_max"] = compute_v_max(run.system.phases[i], r, run.system.p_min, run.system.p_max, run.mode);
      p["v"] = ctl->v;
      p["beta"] = ctl->beta;
    }
    phases.push_back(p);
  }
  j["phases"] = phases;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase balancing with energy storage: simulation and experiments"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, trace_opts, alloc_opts, validate_opts;

  auto* run = app.add_subcommand("run", "simulate one configuration");
  add_common(run, run_opts);

  auto* sweep = app.add_subcommand("sweep", "sweep one parameter over several seeds");
  add_common(sweep, sweep_opts);
  std::string parameter;
  std::vector<double> values;
  int replications = 5;
  sweep->add_option("--parameter", parameter, "parameter to sweep")
      ->required()
      ->check(CLI::IsMember(sweep_parameters()));
  sweep->add_option("--values", values, "values to sweep")->required();
  sweep->add_option("--replications", replications, "seeds per point (seed, seed+1, ...)")
      ->check(CLI::PositiveNumber);

  auto* trace = app.add_subcommand("admm-trace", "objective gap per ADMM iteration");
  add_common(trace, trace_opts);
  std::vector<double> rhos{1.0, 5.0, 20.0};
  int iterations = 5000;
  std::optional<double> energy_state;
  trace->add_option("--rho", rhos, "penalty values");
  trace->add_option("--iterations", iterations, "iterations per rho")->check(CLI::PositiveNumber);
  trace->add_option("--energy-state", energy_state, "storage energy (kWh) for the instance");

  auto* alloc = app.add_subcommand("alloc-check", "brute-force capacity allocation check");
  add_common(alloc, alloc_opts);
  double s_total = 30.0;
  double grid = 0.5;
  alloc->add_option("--s-total", s_total, "total capacity (kWh)");
  alloc->add_option("--grid", grid, "grid resolution (kWh)");

  auto* validate = app.add_subcommand("validate", "check a configuration and print derived values");
  add_common(validate, validate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts, parameter, values, replications);
    if (*trace) return cmd_admm_trace(trace_opts, rhos, iterations, energy_state);
    if (*alloc) return cmd_alloc_check(alloc_opts, s_total, grid);
    if (*validate) return cmd_validate(validate_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
