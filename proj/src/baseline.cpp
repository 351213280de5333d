#include "phasebal/baseline.hpp"

#include <algorithm>

#include "phasebal/errors.hpp"

namespace phasebal {

std::pair<double, double> greedy_net_bounds(const StorageParams& st, double s) {
  return {std::max(-st.u_max, st.s_min - s), std::min(st.u_max, st.s_max - s)};
}

PerSlotProblem greedy_slot_problem(const SystemConfig& cfg, const ControllerState& ctrl,
                                   const SystemState& state, StorageMode mode) {
  const std::size_t n = cfg.size();
  std::vector<double> weights(n, 0.0), lo(n, 0.0), hi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!cfg.phases[i].storage) continue;
    std::tie(lo[i], hi[i]) = greedy_net_bounds(*cfg.phases[i].storage, ctrl.s[i]);
  }
  return build_slot_problem(cfg, state, mode, weights, lo, hi);
}

namespace {

StepOutcome greedy_step(const SystemConfig& cfg, const ControllerState& ctrl,
                        const SystemState& state, const SlotSolver& solver, StorageMode mode) {
  const PerSlotProblem problem = greedy_slot_problem(cfg, ctrl, state, mode);
  SolveResult solved;
  try {
    solved = solver(problem);
  } catch (const SolverFailure& e) {
    throw SolverFailure("slot " + std::to_string(state.slot) + ": " + e.what());
  }
  return finish_slot(cfg, ctrl, state, solved, mode == StorageMode::NonIdeal);
}

}  // namespace

StepOutcome greedy_step_ideal(const SystemConfig& cfg, const ControllerState& ctrl,
                              const SystemState& state, const SlotSolver& solver) {
  return greedy_step(cfg, ctrl, state, solver, StorageMode::Ideal);
}

StepOutcome greedy_step_nonideal(const SystemConfig& cfg, const ControllerState& ctrl,
                                 const SystemState& state, const SlotSolver& solver) {
  return greedy_step(cfg, ctrl, state, solver, StorageMode::NonIdeal);
}

}  // namespace phasebal
