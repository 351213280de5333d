#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phasebal/controller.hpp"
#include "phasebal/solver.hpp"

namespace phasebal {

// Substation -> phase i: the flow iterate f_i^k. Messages travel on a
// per-phase link, so the phase index is addressing, not payload.
struct DownlinkMsg {
  int k = 0;
  double f = 0.0;
};

// Phase i -> substation: m_i^k = r_i + l_i^{k+1} - draw_i^{k+1} + lambda_i^k / rho.
struct UplinkMsg {
  int k = 0;
  double m = 0.0;
};

// Sent once after termination so the substation can book the slot. Not part
// of the iterative protocol and not counted in message_count.
struct FinalReport {
  double l = 0.0;
  double u_plus = 0.0;
  double u_minus = 0.0;
};

std::string to_json(const DownlinkMsg& msg);
std::string to_json(const UplinkMsg& msg);

class PhaseAgent {
 public:
  PhaseAgent(PhaseProblem local, StorageMode mode, double rho);

  // Applies the pending multiplier update with the received f^k (k > 0),
  // then solves the block and replies with m^k. Throws ProtocolOrderViolation
  // unless msg.k is the next expected round.
  UplinkMsg round(const DownlinkMsg& msg);

  FinalReport report() const;
  double lambda() const { return lambda_; }
  int expected_k() const { return expected_k_; }

 private:
  PhaseProblem local_;
  StorageMode mode_;
  double rho_;
  double lambda_ = 0.0;
  double coupling_ = 0.0;  // r + l - draw from the last block update
  BlockSolution block_;
  int expected_k_ = 0;
};

UplinkMsg phase_agent_round(PhaseAgent& agent, const DownlinkMsg& msg);

// Holds the flow set and loss only. Mirrors each lambda_i from public
// quantities: lambda_i^{k+1} / rho = f_i^{k+1} + m_i^k.
class Substation {
 public:
  Substation(FlowSet flows, double rho, double tol_primal, double tol_dual);

  std::size_t size() const { return f_.size(); }
  std::vector<DownlinkMsg> initial_downlinks() const;

  // One entry per phase, in phase order. Throws MissingUplink if any is
  // absent or carries the wrong round.
  std::vector<DownlinkMsg> round(const std::vector<std::optional<UplinkMsg>>& uplinks);

  bool converged() const;
  int k() const { return k_; }
  const std::vector<double>& f() const { return f_; }
  std::vector<double> mirrored_lambda() const;
  double primal_residual() const { return monitor_.primal(); }
  double dual_residual() const { return monitor_.dual(); }

 private:
  FlowSet flows_;
  double rho_;
  double tol_primal_;
  double tol_dual_;
  std::vector<double> f_;
  ResidualMonitor monitor_;
  int k_ = 0;
  bool observed_ = false;
};

std::vector<DownlinkMsg> substation_round(Substation& station,
                                          const std::vector<std::optional<UplinkMsg>>& uplinks);

struct DistributedResult {
  Action action;
  int iterations = 0;
  std::size_t message_count = 0;  // protocol messages, 2 N per iteration
  std::size_t report_count = 0;   // final (l, u) reports, N
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::vector<double> lambda;  // substation mirror at exit
};

// Runs the protocol to termination. Honors rho, tolerances, max_iter,
// throw_on_nonconverged and on_iterate (called with the substation's f and
// mirrored lambda) from options; warm starts are not supported. When `log`
// is set every message is written there as a JSON line.
DistributedResult run_distributed_solve(const PerSlotProblem& problem,
                                        const AdmmOptions& options = {},
                                        std::ostream* log = nullptr);

// Adapter so the controller and baseline can run on the distributed protocol.
SlotSolver distributed_solver(AdmmOptions options = {});

}  // namespace phasebal
