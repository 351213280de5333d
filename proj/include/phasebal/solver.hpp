#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "phasebal/model.hpp"

namespace phasebal {

// Phase-local data of the per-slot problem: everything H_i needs plus the
// coupling constant r_i. For phases without storage u is pinned to zero.
struct PhaseProblem {
  CostFunction cost_l;
  CostFunction cost_deg;
  bool has_storage = false;
  double storage_weight = 0.0;  // (s - beta) / V; zero for the greedy policy
  double price = 0.0;
  double r = 0.0;
  double eta_plus = 1.0;
  double eta_minus = 1.0;
  double u_max = 0.0;
  // Bounds on the net charge u+ - u-. Ideal storage uses them as the box on
  // u; non-ideal storage intersects them with [0, u_max]^2.
  double net_lo = 0.0;
  double net_hi = 0.0;
};

// The substation's share of the problem: loss and flow box.
struct FlowSet {
  CostFunction loss;
  std::vector<double> f_min;
  std::vector<double> f_max;
};

// One slot of the relaxed problem, ideal or non-ideal (the latter without the non-simultaneity
// constraint): minimise sum_i H_i + sum_i F(f_i - mean f) subject to the
// flow box and f_i + r_i + l_i - draw_i = 0.
struct PerSlotProblem {
  StorageMode mode = StorageMode::Ideal;
  std::vector<PhaseProblem> phases;
  CostFunction loss;
  std::vector<double> f_min;
  std::vector<double> f_max;

  std::size_t size() const { return phases.size(); }
  FlowSet flow_set() const { return {loss, f_min, f_max}; }
};

// Assembles the per-slot problem for a policy. `weights` and the net bounds
// are indexed by phase; entries for phases without storage are ignored.
PerSlotProblem build_slot_problem(const SystemConfig& cfg, const SystemState& state,
                                  StorageMode mode, std::span<const double> weights,
                                  std::span<const double> net_lo, std::span<const double> net_hi);

struct BlockSolution {
  double l = 0.0;
  double u_plus = 0.0;
  double u_minus = 0.0;
};

// Power drawn by the storage from the phase for a block solution.
double block_draw(const PhaseProblem& phase, StorageMode mode, const BlockSolution& b);

// r_i + l_i - draw_i: the phase-side part of the balance residual.
double coupling_term(const PhaseProblem& phase, StorageMode mode, const BlockSolution& b);

// argmin over (l_i, u_i) of H_i + rho/2 (f_i + r_i + l_i - draw_i + lambda_i/rho)^2.
BlockSolution phase_block_update(const PhaseProblem& phase, StorageMode mode, double f_i,
                                 double lambda_i, double rho);
BlockSolution phase_block_update(const PerSlotProblem& problem, std::size_t i, double f_i,
                                 double lambda_i, double rho);

// argmin over the flow box of sum_i F(f_i - mean f) + rho/2 (f_i + m_i)^2.
// Throws Nonconverged if the gradient-mapping norm at exit exceeds 1e-8
// (scaled by rho and |m|).
std::vector<double> flow_update(const FlowSet& flows, std::span<const double> m, double rho);
std::vector<double> flow_update(const PerSlotProblem& problem, std::span<const double> m, double rho);

inline double dual_update(double lambda, double rho, double residual) {
  return lambda + rho * residual;
}

// Objective of the per-slot problem at an arbitrary point (no feasibility
// check): w_t plus the storage-state term.
double slot_objective(const PerSlotProblem& problem, const Action& action);

// Stopping test computed only from quantities the substation sees: the flow
// iterates and the uplinked m_i. Because lambda^{k+1}/rho = f^{k+1} + m^k,
//   primal_i = f_i^{k+1} + m_i^k - lambda_i^k / rho,
//   dual     = rho * max_i |f_i^{k+1} - f_i^k|.
class ResidualMonitor {
 public:
  ResidualMonitor(std::vector<double> f0, std::vector<double> scaled_lambda0, double rho);

  void observe(std::span<const double> f_next, std::span<const double> m);

  double primal() const { return primal_; }
  double dual() const { return dual_; }
  // Mirror of lambda_i^k for the most recent k.
  double lambda(std::size_t i) const { return rho_ * scaled_lambda_[i]; }

 private:
  std::vector<double> f_prev_;
  std::vector<double> scaled_lambda_;
  double rho_;
  double primal_ = 0.0;
  double dual_ = 0.0;
};

struct AdmmStart {
  std::vector<double> f;
  std::vector<double> lambda;
};

struct AdmmOptions {
  double rho = 5.0;
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  int max_iter = 5000;
  bool record_trace = false;
  bool throw_on_nonconverged = true;
  std::optional<AdmmStart> start;  // zeros when absent
  // Called after every iteration with (k, f^{k}, lambda^{k}).
  std::function<void(int, const std::vector<double>&, const std::vector<double>&)> on_iterate;
};

struct AdmmState {
  int k = 0;
  std::vector<double> l;
  std::vector<double> u_plus;
  std::vector<double> u_minus;
  std::vector<double> f;
  std::vector<double> lambda;
  double rho = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
};

struct TraceRow {
  int k = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct SolveResult {
  Action action;
  AdmmState state;
  std::vector<TraceRow> trace;
  double objective = 0.0;
};

// Sharing-form ADMM on the per-slot problem. Throws Nonconverged (with the
// final residuals) unless options.throw_on_nonconverged is false.
SolveResult solve(const PerSlotProblem& problem, const AdmmOptions& options = {});

struct OracleResult {
  double objective = 0.0;
  Action action;
  int iterations = 0;
  double gradient_mapping = 0.0;
};

// Independent reference solver: spectral projected gradient on the joint
// problem after eliminating l through the balance constraint.
OracleResult oracle_solve(const PerSlotProblem& problem, double tol = 1e-10,
                          int max_iter = 2'000'000);

}  // namespace phasebal
