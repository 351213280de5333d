#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "phasebal/model.hpp"
#include "phasebal/solver.hpp"

namespace phasebal {

// Tolerance (kWh) separating controller bugs from round-off in the
// energy-state update.
inline constexpr double kStateTolerance = 1e-9;

// Control weight and energy offset of one storage unit.
struct StorageControl {
  double v = 0.0;
  double beta = 0.0;
};

struct ControllerParams {
  StorageMode mode = StorageMode::Ideal;
  std::vector<std::optional<StorageControl>> phases;  // nullopt: no storage

  // (s - beta) / V, the per-unit weight on net charge in the slot problem.
  double weight(std::size_t i, double s) const;
};

// Largest admissible control weight. Throws NonpositiveNumerator when
// s_max - s_min - 2 u_max <= 0.
double compute_v_max(const PhaseConfig& phase, const PhaseRanges& ranges, double p_min,
                     double p_max, StorageMode mode);

double compute_beta(const PhaseConfig& phase, const PhaseRanges& ranges, double p_max, double v,
                    StorageMode mode);

// Worst-case per-slot cost of the non-simultaneity adjustment, summed over
// storage phases.
double compute_epsilon(const SystemConfig& cfg, const DerivedRanges& ranges);

// V_i = V_i,max unless explicit values (one per phase; ignored where there is
// no storage) are given. Throws InvalidConfig if an explicit V is outside
// (0, V_max].
ControllerParams make_controller_params(const SystemConfig& cfg, const DerivedRanges& ranges,
                                        StorageMode mode,
                                        const std::optional<std::vector<double>>& v_values = {});

// Removes simultaneous charging and discharging while keeping the net charge
// and the phase's power balance.
BlockSolution adjust_solution(const PhaseConfig& phase, const BlockSolution& intermediate);

// s + u+ - u-. Throws StateBoundViolation outside [s_min, s_max] beyond
// kStateTolerance; results within the tolerance are clamped to the bounds.
double update_energy_state(const StorageParams& storage, double s, double u_plus, double u_minus);

struct ControllerState {
  std::vector<double> s;  // one per phase, zero where there is no storage
  std::size_t t = 0;

  static ControllerState initial(const SystemConfig& cfg);
};

struct SlotRecord {
  std::size_t t = 0;
  SystemState state;
  Action action;
  std::vector<double> s_before;
  std::vector<double> s_after;
  CostBreakdown cost;
  double objective = 0.0;  // per-slot problem objective at the solver output
  int iterations = 0;
  double balance_residual = 0.0;
  double pre_adjust_complementarity = 0.0;  // max_i u+_i u-_i before adjustment
};

struct StepOutcome {
  Action action;
  ControllerState next;
  SlotRecord record;
};

// Solves one per-slot problem. The centralized ADMM and the distributed
// protocol both fit this shape.
using SlotSolver = std::function<SolveResult(const PerSlotProblem&)>;

SlotSolver centralized_solver(AdmmOptions options = {});

// Same as centralized_solver, but every slot starts from the previous slot's
// flows and multipliers.
SlotSolver warm_started_solver(AdmmOptions options = {});

// The per-slot problem the proposed controller solves: weights (s - beta)/V,
// net charge in [-u_max, u_max].
PerSlotProblem proposed_slot_problem(const SystemConfig& cfg, const ControllerParams& params,
                                     const ControllerState& ctrl, const SystemState& state);

StepOutcome step_ideal(const SystemConfig& cfg, const ControllerParams& params,
                       const ControllerState& ctrl, const SystemState& state,
                       const SlotSolver& solver);

StepOutcome step_nonideal(const SystemConfig& cfg, const ControllerParams& params,
                          const ControllerState& ctrl, const SystemState& state,
                          const SlotSolver& solver);

// Finishes a slot for any policy: optional non-simultaneity adjustment,
// energy update, cost accounting.
StepOutcome finish_slot(const SystemConfig& cfg, const ControllerState& ctrl,
                        const SystemState& state, const SolveResult& solved, bool adjust);

}  // namespace phasebal
