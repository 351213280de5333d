#include "phasebal/controller.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "phasebal/errors.hpp"

namespace phasebal {

double ControllerParams::weight(std::size_t i, double s) const {
  const auto& c = phases[i];
  if (!c) return 0.0;
  return (s - c->beta) / c->v;
}

double compute_v_max(const PhaseConfig& phase, const PhaseRanges& r, double p_min, double p_max,
                     StorageMode mode) {
  const auto& st = *phase.storage;
  const double numerator = st.s_max - st.s_min - 2.0 * st.u_max;
  if (!(numerator > 0.0)) {
    throw NonpositiveNumerator("s_max - s_min - 2 u_max must be positive to admit V > 0");
  }
  double denominator;
  if (mode == StorageMode::Ideal) {
    denominator = p_max - p_min + r.dp_max - r.dp_min + r.cp_max - r.cp_min;
  } else {
    const double ep = st.eta_plus;
    const double em = st.eta_minus;
    denominator = p_max / ep - p_min * em + r.dp_max - r.dp_min + r.cp_max / ep - em * r.cp_min;
  }
  return numerator / denominator;
}

double compute_beta(const PhaseConfig& phase, const PhaseRanges& r, double p_max, double v,
                    StorageMode mode) {
  const auto& st = *phase.storage;
  if (mode == StorageMode::Ideal) {
    return st.s_min + st.u_max + v * (p_max + r.dp_max + r.cp_max);
  }
  return st.s_min + st.u_max + v * (p_max / st.eta_plus + r.cp_max / st.eta_plus + r.dp_max);
}

double compute_epsilon(const SystemConfig& cfg, const DerivedRanges& ranges) {
  double eps = 0.0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& ph = cfg.phases[i];
    if (!ph.storage) continue;
    const auto& st = *ph.storage;
    const auto& r = ranges.phases[i];
    eps += cfg.p_max * st.u_max * (1.0 / st.eta_plus + st.eta_minus) + 2.0 * r.d_max + r.c_max;
  }
  return eps;
}

ControllerParams make_controller_params(const SystemConfig& cfg, const DerivedRanges& ranges,
                                        StorageMode mode,
                                        const std::optional<std::vector<double>>& v_values) {
  ControllerParams params;
  params.mode = mode;
  if (v_values && v_values->size() != cfg.size()) {
    throw InvalidConfig("explicit V values need one entry per phase");
  }
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& ph = cfg.phases[i];
    if (!ph.storage) {
      params.phases.emplace_back();
      continue;
    }
    const double v_max = compute_v_max(ph, ranges.phases[i], cfg.p_min, cfg.p_max, mode);
    double v = v_max;
    if (v_values) {
      v = (*v_values)[i];
      if (!(v > 0.0 && v <= v_max)) {
        std::ostringstream os;
        os << "phase " << i << ": V = " << v << " outside (0, " << v_max << "]";
        throw InvalidConfig(os.str());
      }
    }
    params.phases.push_back(StorageControl{v, compute_beta(ph, ranges.phases[i], cfg.p_max, v, mode)});
  }
  return params;
}

BlockSolution adjust_solution(const PhaseConfig& phase, const BlockSolution& in) {
  BlockSolution out;
  out.u_plus = std::max(in.u_plus - in.u_minus, 0.0);
  out.u_minus = std::max(in.u_minus - in.u_plus, 0.0);
  double ep = 1.0;
  double em = 1.0;
  if (phase.storage) {
    ep = phase.storage->eta_plus;
    em = phase.storage->eta_minus;
  }
  // Written as differences so an already complementary input passes through
  // unchanged, bit for bit.
  out.l = in.l + em * (in.u_minus - out.u_minus) + (out.u_plus - in.u_plus) / ep;
  return out;
}

double update_energy_state(const StorageParams& st, double s, double u_plus, double u_minus) {
  const double next = s + u_plus - u_minus;
  if (next < st.s_min - kStateTolerance || next > st.s_max + kStateTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "energy state " << next << " outside [" << st.s_min << ", " << st.s_max << "]";
    throw StateBoundViolation(os.str());
  }
  return std::clamp(next, st.s_min, st.s_max);
}

ControllerState ControllerState::initial(const SystemConfig& cfg) {
  ControllerState c;
  for (const auto& ph : cfg.phases) c.s.push_back(ph.storage ? ph.storage->s_initial : 0.0);
  return c;
}

SlotSolver centralized_solver(AdmmOptions options) {
  return [options](const PerSlotProblem& p) { return solve(p, options); };
}

SlotSolver warm_started_solver(AdmmOptions options) {
  auto last = std::make_shared<std::optional<AdmmStart>>();
  return [options, last](const PerSlotProblem& p) {
    AdmmOptions opts = options;
    opts.start = *last;
    SolveResult r = solve(p, opts);
    *last = AdmmStart{r.state.f, r.state.lambda};
    return r;
  };
}

StepOutcome finish_slot(const SystemConfig& cfg, const ControllerState& ctrl,
                        const SystemState& state, const SolveResult& solved, bool adjust) {
  const std::size_t n = cfg.size();
  StepOutcome out;
  Action action = solved.action;
  double complementarity = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    complementarity = std::max(complementarity, action.u_plus[i] * action.u_minus[i]);
    if (adjust && cfg.phases[i].storage) {
      const BlockSolution fixed = adjust_solution(
          cfg.phases[i], {action.l[i], action.u_plus[i], action.u_minus[i]});
      action.l[i] = fixed.l;
      action.u_plus[i] = fixed.u_plus;
      action.u_minus[i] = fixed.u_minus;
    }
  }

  out.next.t = ctrl.t + 1;
  out.next.s = ctrl.s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ph = cfg.phases[i];
    if (!ph.storage) continue;
    try {
      out.next.s[i] = update_energy_state(*ph.storage, ctrl.s[i], action.u_plus[i], action.u_minus[i]);
    } catch (const StateBoundViolation& e) {
      throw StateBoundViolation("slot " + std::to_string(state.slot) + ", phase " +
                                std::to_string(i) + ": " + e.what());
    }
  }

  auto& rec = out.record;
  rec.t = state.slot;
  rec.state = state;
  rec.action = action;
  rec.s_before = ctrl.s;
  rec.s_after = out.next.s;
  rec.balance_residual = max_balance_residual(cfg, state, action);
  try {
    rec.cost = system_cost(cfg, state, action);
  } catch (const BalanceViolation& e) {
    throw BalanceViolation("slot " + std::to_string(state.slot) + ": " + e.what());
  }
  rec.objective = solved.objective;
  rec.iterations = solved.state.k;
  rec.pre_adjust_complementarity = complementarity;
  out.action = std::move(action);
  return out;
}

PerSlotProblem proposed_slot_problem(const SystemConfig& cfg, const ControllerParams& params,
                                     const ControllerState& ctrl, const SystemState& state) {
  const std::size_t n = cfg.size();
  std::vector<double> weights(n, 0.0), lo(n, 0.0), hi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!cfg.phases[i].storage) continue;
    weights[i] = params.weight(i, ctrl.s[i]);
    lo[i] = -cfg.phases[i].storage->u_max;
    hi[i] = cfg.phases[i].storage->u_max;
  }
  return build_slot_problem(cfg, state, params.mode, weights, lo, hi);
}

namespace {

StepOutcome step_proposed(const SystemConfig& cfg, const ControllerParams& params,
                          const ControllerState& ctrl, const SystemState& state,
                          const SlotSolver& solver) {
  const PerSlotProblem problem = proposed_slot_problem(cfg, params, ctrl, state);
  SolveResult solved;
  try {
    solved = solver(problem);
  } catch (const SolverFailure& e) {
    throw SolverFailure("slot " + std::to_string(state.slot) + ": " + e.what());
  }
  return finish_slot(cfg, ctrl, state, solved, params.mode == StorageMode::NonIdeal);
}

}  // namespace

StepOutcome step_ideal(const SystemConfig& cfg, const ControllerParams& params,
                       const ControllerState& ctrl, const SystemState& state,
                       const SlotSolver& solver) {
  if (params.mode != StorageMode::Ideal) throw InvalidConfig("step_ideal needs ideal parameters");
  return step_proposed(cfg, params, ctrl, state, solver);
}

StepOutcome step_nonideal(const SystemConfig& cfg, const ControllerParams& params,
                          const ControllerState& ctrl, const SystemState& state,
                          const SlotSolver& solver) {
  if (params.mode != StorageMode::NonIdeal) {
    throw InvalidConfig("step_nonideal needs non-ideal parameters");
  }
  return step_proposed(cfg, params, ctrl, state, solver);
}

}  // namespace phasebal
