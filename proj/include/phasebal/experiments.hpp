#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phasebal/simulation.hpp"

namespace phasebal {

// Sweepable parameters:
//   s_max          every storage capacity
//   u_max          every charge/discharge rate
//   phase_corr     corr(1,2), other phases independent
//   phase_corr_13  corr(1,2) = corr(1,3), corr(2,3) = 0
//   time_corr      AR(1) coefficient
//   round_trip     eta+ = eta- = sqrt(value); forces non-ideal mode
//   n_phases       number of identical phases (copies of phase 1)
//   alloc_s1       s_max of phase 1, phase 2 fixed, phase 3 takes the rest
//                  of the base total (three phases only)
std::vector<std::string> sweep_parameters();

// Base config with one parameter replaced. Throws InfeasibleSweepPoint when
// the result fails validation (non-PSD correlation, V_max numerator <= 0, ...).
RunConfig apply_sweep_value(const RunConfig& base, const std::string& parameter, double value);

struct SweepRow {
  double value = 0.0;
  Algorithm algorithm = Algorithm::Proposed;
  StorageMode mode = StorageMode::Ideal;
  bool feasible = true;
  std::string note;  // reason when infeasible
  std::vector<std::uint64_t> seeds;
  std::vector<double> costs;  // per seed, same order as seeds
  double mean_cost = 0.0;
  double std_cost = 0.0;  // across seeds
  double gap = 0.0;
  double epsilon = 0.0;
  double mean_lower_bound = 0.0;  // proposed only
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;  // value-major, then algorithm
};

// Every (value, algorithm, seed) run is independent and executes
// concurrently. Seeds are shared across values, so rows are paired.
SweepResult run_sweep(const RunConfig& base, const std::string& parameter,
                      const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                      const std::vector<Algorithm>& algorithms = {Algorithm::Proposed,
                                                                 Algorithm::Greedy});

const SweepRow* find_row(const SweepResult& sweep, double value, Algorithm algorithm);

void write_sweep_csv(std::ostream& os, const SweepResult& sweep);

// Time-averaged cost of a fixed config for each seed, in seed order.
std::vector<double> replicate_costs(const RunConfig& run, const std::vector<std::uint64_t>& seeds);

struct AdmmTraceRow {
  double rho = 0.0;
  int k = 0;
  double objective = 0.0;
  double gap = 0.0;           // |objective - reference|
  double relative_gap = 0.0;  // gap / max(1, |reference|)
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct AdmmTraceResult {
  double reference_objective = 0.0;  // ADMM at tolerance 1e-10
  double oracle_objective = 0.0;     // independent projected-gradient solve
  std::vector<AdmmTraceRow> rows;
  // Per rho: iterations after k = 20 where the gap grew while still above
  // round-off (plain ADMM is not monotone, so this is reported, not enforced).
  std::vector<int> gap_increases;
};

// The first slot of the run's stream, with storage at `energy_state`
// (default: midpoint of [s_min, s_max]) and the run's algorithm weights.
PerSlotProblem representative_problem(const RunConfig& run,
                                      std::optional<double> energy_state = std::nullopt);

AdmmTraceResult run_admm_trace(const PerSlotProblem& problem, const std::vector<double>& rhos,
                               int iterations = 5000);
AdmmTraceResult run_admm_trace(const RunConfig& run, const std::vector<double>& rhos,
                               int iterations = 5000);

void write_admm_trace_csv(std::ostream& os, const AdmmTraceResult& trace);

struct AllocationPoint {
  std::vector<double> s_max;
  double bound = 0.0;  // sum_i u_max^2 / (2 V_i,max(s_i,max))
};

struct AllocationReport {
  double s_total = 0.0;
  double grid = 0.0;
  std::vector<AllocationPoint> points;  // feasible grid points only
  AllocationPoint best;
  std::vector<double> equal_split;
  bool argmin_is_equal = false;  // within one grid cell per phase
};

// Optimality-gap bound of an allocation of capacities.
double allocation_bound(const RunConfig& base, const std::vector<double>& s_max);

// Brute force over capacities on a grid summing to s_total. Splits where a
// phase has s_max - s_min - 2 u_max <= 0 are skipped. Throws
// AssumptionViolation unless all phases are identical apart from s_max.
AllocationReport check_equal_allocation(const RunConfig& base, double s_total, double grid);

// Base config with the given per-phase capacities.
RunConfig with_allocation(const RunConfig& base, const std::vector<double>& s_max);

void write_allocation_csv(std::ostream& os, const AllocationReport& report);

}  // namespace phasebal
