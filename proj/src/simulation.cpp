#include "phasebal/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include <json.hpp>

#include "phasebal/baseline.hpp"
#include "phasebal/distributed.hpp"
#include "phasebal/errors.hpp"

namespace phasebal {

using nlohmann::ordered_json;

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::Proposed ? "proposed" : "greedy";
}

Algorithm algorithm_from_string(const std::string& text) {
  if (text == "proposed") return Algorithm::Proposed;
  if (text == "greedy") return Algorithm::Greedy;
  throw InvalidConfig("unknown algorithm '" + text + "' (expected proposed or greedy)");
}

std::string to_string(SolverKind kind) {
  return kind == SolverKind::Centralized ? "centralized" : "distributed";
}

SolverKind solver_kind_from_string(const std::string& text) {
  if (text == "centralized") return SolverKind::Centralized;
  if (text == "distributed") return SolverKind::Distributed;
  throw InvalidConfig("unknown solver '" + text + "' (expected centralized or distributed)");
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

RunConfig default_run_config(std::size_t n_phases, std::uint64_t seed) {
  RunConfig run;
  run.system = default_system_config(n_phases);
  run.scenario = default_scenario_spec(n_phases, seed);
  return run;
}

void validate_run_config(const RunConfig& run) {
  validate_config(run.system);
  if (run.mode == StorageMode::Ideal) {
    for (std::size_t i = 0; i < run.system.size(); ++i) {
      const auto& st = run.system.phases[i].storage;
      if (st && (st->eta_plus != 1.0 || st->eta_minus != 1.0)) {
        throw InvalidConfig("phase " + std::to_string(i) +
                            ": ideal mode requires eta_plus = eta_minus = 1");
      }
    }
  }
  if (!(run.rho > 0.0)) throw InvalidConfig("rho must be positive");
  if (!(run.tol_primal > 0.0 && run.tol_dual > 0.0)) {
    throw InvalidConfig("ADMM tolerances must be positive");
  }
  if (run.max_iter < 1) throw InvalidConfig("max_iter must be at least 1");
  if (run.solver == SolverKind::Distributed && run.warm_start) {
    throw InvalidConfig("warm_start is only available with the centralized solver");
  }
  if (!run.replay_csv && run.scenario.horizon == 0) throw InvalidConfig("horizon must be positive");
  // Constructing the generator runs the scenario checks (sizes, PSD, |rho2| < 1).
  if (!run.replay_csv) ScenarioGenerator probe(run.scenario, run.system);
  const auto ranges = derive_ranges(run.system);
  make_controller_params(run.system, ranges, run.mode, run.v_values);
}

AdmmOptions admm_options(const RunConfig& run) {
  AdmmOptions o;
  o.rho = run.rho;
  o.tol_primal = run.tol_primal;
  o.tol_dual = run.tol_dual;
  o.max_iter = run.max_iter;
  return o;
}

namespace {

SlotSolver make_solver(const RunConfig& run) {
  const AdmmOptions o = admm_options(run);
  if (run.solver == SolverKind::Distributed) return distributed_solver(o);
  return run.warm_start ? warm_started_solver(o) : centralized_solver(o);
}

std::unique_ptr<StateStream> make_stream(const RunConfig& run) {
  if (run.replay_csv) {
    return std::make_unique<ReplayStream>(ReplayStream::from_csv(*run.replay_csv, run.system));
  }
  return std::make_unique<ScenarioGenerator>(run.scenario, run.system);
}

}  // namespace

SimulationResult run_simulation(const RunConfig& run) {
  validate_run_config(run);
  const auto& cfg = run.system;
  const std::size_t n = cfg.size();
  const auto ranges = derive_ranges(cfg);
  const ControllerParams params = make_controller_params(cfg, ranges, run.mode, run.v_values);
  const SlotSolver solver = make_solver(run);
  auto stream = make_stream(run);

  SimulationResult res;
  auto& sum = res.summary;
  sum.algorithm = run.algorithm;
  sum.mode = run.mode;
  sum.seed = run.scenario.seed;
  sum.mean_abs_deviation.assign(n, 0.0);

  ControllerState ctrl = ControllerState::initial(cfg);
  long long total_iter = 0;
  while (auto state = stream->next()) {
    StepOutcome out;
    if (run.algorithm == Algorithm::Proposed) {
      out = run.mode == StorageMode::Ideal ? step_ideal(cfg, params, ctrl, *state, solver)
                                           : step_nonideal(cfg, params, ctrl, *state, solver);
    } else {
      out = run.mode == StorageMode::Ideal ? greedy_step_ideal(cfg, ctrl, *state, solver)
                                           : greedy_step_nonideal(cfg, ctrl, *state, solver);
    }
    const auto& rec = out.record;
    sum.mean_cost.arbitrage += rec.cost.arbitrage;
    sum.mean_cost.degradation += rec.cost.degradation;
    sum.mean_cost.controllable += rec.cost.controllable;
    sum.mean_cost.imbalance += rec.cost.imbalance;
    sum.mean_cost.total += rec.cost.total;
    double f_bar = 0.0;
    for (double f : rec.action.f) f_bar += f;
    f_bar /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      sum.mean_abs_deviation[i] += std::abs(rec.action.f[i] - f_bar);
      if (const auto& st = cfg.phases[i].storage) {
        const double s = rec.s_after[i];
        if (s < st->s_min || s > st->s_max) sum.states_in_bounds = false;
        const double comp = rec.action.u_plus[i] * rec.action.u_minus[i];
        sum.max_complementarity = std::max(sum.max_complementarity, comp);
        if (run.mode == StorageMode::NonIdeal && comp != 0.0) sum.complementarity_ok = false;
      }
    }
    sum.max_balance_residual = std::max(sum.max_balance_residual, rec.balance_residual);
    if (!(rec.balance_residual <= kBalanceTolerance)) sum.balance_ok = false;
    total_iter += rec.iterations;
    sum.max_iterations = std::max(sum.max_iterations, rec.iterations);
    res.records.push_back(rec);
    ctrl = out.next;
  }

  const std::size_t T = res.records.size();
  sum.horizon = T;
  if (T > 0) {
    const double inv = 1.0 / static_cast<double>(T);
    sum.mean_cost.arbitrage *= inv;
    sum.mean_cost.degradation *= inv;
    sum.mean_cost.controllable *= inv;
    sum.mean_cost.imbalance *= inv;
    sum.mean_cost.total *= inv;
    for (double& d : sum.mean_abs_deviation) d *= inv;
    sum.mean_iterations = static_cast<double>(total_iter) * inv;
  }
  sum.bounds = compute_theorem_bounds(run, sum);
  return res;
}

BoundsReport compute_theorem_bounds(const RunConfig& run, const RunSummary& summary) {
  const auto& cfg = run.system;
  const auto ranges = derive_ranges(cfg);
  const ControllerParams params = make_controller_params(cfg, ranges, run.mode, run.v_values);
  BoundsReport b;
  const double T = static_cast<double>(std::max<std::size_t>(summary.horizon, 1));
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& ctl = params.phases[i];
    if (!ctl) continue;
    const auto& st = *cfg.phases[i].storage;
    b.gap += st.u_max * st.u_max / (2.0 * ctl->v);
    const double dev = st.s_initial - ctl->beta;
    b.finite_t_term += 0.5 * dev * dev / (T * ctl->v);
  }
  if (run.mode == StorageMode::NonIdeal) b.epsilon = compute_epsilon(cfg, ranges);
  // Only the proposed controller's average bounds the optimum from above.
  b.lower_bound = summary.algorithm == Algorithm::Proposed
                      ? summary.mean_cost.total - b.gap - b.epsilon
                      : std::numeric_limits<double>::quiet_NaN();
  return b;
}

void write_slot_csv(std::ostream& os, const RunConfig& run, const std::vector<SlotRecord>& records) {
  const std::size_t n = run.system.size();
  auto header = [&](const char* col) {
    for (std::size_t i = 1; i <= n; ++i) os << ',' << col << '_' << i;
  };
  os << "t";
  header("r");
  os << ",p";
  for (const char* col : {"l", "u_plus", "u_minus", "f", "s"}) header(col);
  os << ",cost_arbitrage,cost_degradation,cost_controllable,cost_imbalance,cost_total"
        ",objective,iterations,balance_residual,algorithm,mode\n";
  const std::string algo = to_string(run.algorithm);
  const std::string mode = to_string(run.mode);
  for (const auto& rec : records) {
    os << rec.t;
    auto cols = [&](const std::vector<double>& v) {
      for (double x : v) os << ',' << format_double(x);
    };
    cols(rec.state.r);
    os << ',' << format_double(rec.state.p);
    cols(rec.action.l);
    cols(rec.action.u_plus);
    cols(rec.action.u_minus);
    cols(rec.action.f);
    cols(rec.s_after);
    for (double x : {rec.cost.arbitrage, rec.cost.degradation, rec.cost.controllable,
                     rec.cost.imbalance, rec.cost.total, rec.objective}) {
      os << ',' << format_double(x);
    }
    os << ',' << rec.iterations << ',' << format_double(rec.balance_residual) << ',' << algo << ','
       << mode << '\n';
  }
}

namespace {

ordered_json number_or_null(double x) {
  return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr);
}

}  // namespace

std::string summary_to_json(const RunConfig& run, const RunSummary& s) {
  ordered_json j;
  j["csv_schema"] = kSlotCsvSchema;
  j["algorithm"] = to_string(s.algorithm);
  j["mode"] = to_string(s.mode);
  j["solver"] = to_string(run.solver);
  j["seed"] = s.seed;
  j["rng"] = run.scenario.rng;
  j["horizon"] = s.horizon;
  j["mean_cost"] = {{"arbitrage", s.mean_cost.arbitrage},
                    {"degradation", s.mean_cost.degradation},
                    {"controllable", s.mean_cost.controllable},
                    {"imbalance", s.mean_cost.imbalance},
                    {"total", s.mean_cost.total}};
  j["mean_abs_deviation"] = s.mean_abs_deviation;
  j["mean_iterations"] = s.mean_iterations;
  j["max_iterations"] = s.max_iterations;
  j["max_balance_residual"] = s.max_balance_residual;
  j["max_complementarity"] = s.max_complementarity;
  j["feasibility"] = {{"states_in_bounds", s.states_in_bounds},
                      {"balance_ok", s.balance_ok},
                      {"complementarity_ok", s.complementarity_ok}};
  j["bounds"] = {{"gap", s.bounds.gap},
                 {"finite_t_term", s.bounds.finite_t_term},
                 {"epsilon", s.bounds.epsilon},
                 {"lower_bound", number_or_null(s.bounds.lower_bound)}};
  return j.dump(2);
}

SimulationResult run_and_write(const RunConfig& run) {
  SimulationResult res = run_simulation(run);
  std::filesystem::create_directories(run.output_dir);
  const std::filesystem::path dir(run.output_dir);
  std::ofstream csv(dir / "slots.csv", std::ios::binary);
  write_slot_csv(csv, run, res.records);
  std::ofstream js(dir / "summary.json", std::ios::binary);
  js << summary_to_json(run, res.summary) << '\n';
  if (!csv || !js) throw InvalidConfig("cannot write outputs under " + run.output_dir);
  return res;
}

}  // namespace phasebal
