#pragma once

#include <utility>

#include "phasebal/controller.hpp"

namespace phasebal {

// Net-charge interval that keeps the next energy state inside its bounds:
// [max(-u_max, s_min - s), min(u_max, s_max - s)].
std::pair<double, double> greedy_net_bounds(const StorageParams& storage, double s);

// Myopic benchmark: minimise this slot's system cost only, with the storage
// state kept feasible through the bounds above.
StepOutcome greedy_step_ideal(const SystemConfig& cfg, const ControllerState& ctrl,
                              const SystemState& state, const SlotSolver& solver);

// Non-ideal variant: the bounds apply to u+ - u-, then the intermediate
// solution goes through adjust_solution.
StepOutcome greedy_step_nonideal(const SystemConfig& cfg, const ControllerState& ctrl,
                                 const SystemState& state, const SlotSolver& solver);

// The per-slot problem greedy solves (zero storage weight, tightened bounds).
PerSlotProblem greedy_slot_problem(const SystemConfig& cfg, const ControllerState& ctrl,
                                   const SystemState& state, StorageMode mode);

}  // namespace phasebal
