#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phasebal/controller.hpp"
#include "phasebal/scenario.hpp"

namespace phasebal {

enum class Algorithm { Proposed, Greedy };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& text);

enum class SolverKind { Centralized, Distributed };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& text);

// Version tag of the per-slot CSV layout; bump when columns change.
inline constexpr const char* kSlotCsvSchema = "slot_records/1";

struct RunConfig {
  SystemConfig system;
  ScenarioSpec scenario;
  Algorithm algorithm = Algorithm::Proposed;
  StorageMode mode = StorageMode::Ideal;
  std::optional<std::vector<double>> v_values;  // absent: V_i = V_i,max
  double rho = 5.0;
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  int max_iter = 5000;
  bool warm_start = false;
  SolverKind solver = SolverKind::Centralized;
  std::optional<std::string> replay_csv;  // replaces the generated stream
  std::string output_dir = "out";
};

// Default system with N phases, default scenario, proposed ideal controller.
RunConfig default_run_config(std::size_t n_phases = 3, std::uint64_t seed = 1);

// Cross-checks the pieces. Throws InvalidConfig (or NonPSDCorrelation).
void validate_run_config(const RunConfig& run);

AdmmOptions admm_options(const RunConfig& run);

struct BoundsReport {
  double gap = 0.0;            // sum over storage phases of u_max^2 / (2 V)
  double finite_t_term = 0.0;  // sum of L(s_0) / (T V), L(s) = (s - beta)^2 / 2
  double epsilon = 0.0;        // non-ideal adjustment constant, 0 in ideal mode
  double lower_bound = 0.0;    // on the optimal time-average cost
};

struct RunSummary {
  Algorithm algorithm = Algorithm::Proposed;
  StorageMode mode = StorageMode::Ideal;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  CostBreakdown mean_cost;
  std::vector<double> mean_abs_deviation;  // per phase, mean |f_i - mean f|
  double mean_iterations = 0.0;
  int max_iterations = 0;
  double max_balance_residual = 0.0;
  double max_complementarity = 0.0;  // max u+ u- after adjustment
  bool states_in_bounds = true;
  bool balance_ok = true;
  bool complementarity_ok = true;
  BoundsReport bounds;
};

struct SimulationResult {
  RunSummary summary;
  std::vector<SlotRecord> records;
};

// Runs the configured algorithm for scenario.horizon slots (or the whole
// replay file). Module errors propagate with the slot index in the message.
SimulationResult run_simulation(const RunConfig& run);

BoundsReport compute_theorem_bounds(const RunConfig& run, const RunSummary& summary);

void write_slot_csv(std::ostream& os, const RunConfig& run, const std::vector<SlotRecord>& records);
std::string summary_to_json(const RunConfig& run, const RunSummary& summary);

// Runs and writes slots.csv and summary.json under run.output_dir.
SimulationResult run_and_write(const RunConfig& run);

// "%.17g"
std::string format_double(double x);

}  // namespace phasebal
