#include "phasebal/distributed.hpp"

#include <sstream>

#include <json.hpp>

#include "phasebal/errors.hpp"

namespace phasebal {

using nlohmann::json;

std::string to_json(const DownlinkMsg& msg) { return json{{"k", msg.k}, {"f", msg.f}}.dump(); }

std::string to_json(const UplinkMsg& msg) { return json{{"k", msg.k}, {"m", msg.m}}.dump(); }

PhaseAgent::PhaseAgent(PhaseProblem local, StorageMode mode, double rho)
    : local_(std::move(local)), mode_(mode), rho_(rho) {}

UplinkMsg PhaseAgent::round(const DownlinkMsg& msg) {
  if (msg.k != expected_k_) {
    std::ostringstream os;
    os << "phase agent expected round " << expected_k_ << ", got " << msg.k;
    throw ProtocolOrderViolation(os.str());
  }
  // f^k closes round k-1: lambda^k = lambda^{k-1} + rho (f^k + r + l^k - draw^k).
  if (msg.k > 0) lambda_ = dual_update(lambda_, rho_, msg.f + coupling_);
  block_ = phase_block_update(local_, mode_, msg.f, lambda_, rho_);
  coupling_ = coupling_term(local_, mode_, block_);
  ++expected_k_;
  return {msg.k, coupling_ + lambda_ / rho_};
}

FinalReport PhaseAgent::report() const { return {block_.l, block_.u_plus, block_.u_minus}; }

UplinkMsg phase_agent_round(PhaseAgent& agent, const DownlinkMsg& msg) { return agent.round(msg); }

Substation::Substation(FlowSet flows, double rho, double tol_primal, double tol_dual)
    : flows_(std::move(flows)),
      rho_(rho),
      tol_primal_(tol_primal),
      tol_dual_(tol_dual),
      f_(flows_.f_min.size(), 0.0),
      monitor_(f_, std::vector<double>(f_.size(), 0.0), rho) {}

std::vector<DownlinkMsg> Substation::initial_downlinks() const {
  std::vector<DownlinkMsg> out;
  for (double v : f_) out.push_back({0, v});
  return out;
}

std::vector<DownlinkMsg> Substation::round(
    const std::vector<std::optional<UplinkMsg>>& uplinks) {
  const std::size_t n = size();
  if (uplinks.size() != n) {
    throw MissingUplink("expected " + std::to_string(n) + " uplinks, got " +
                        std::to_string(uplinks.size()));
  }
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!uplinks[i] || uplinks[i]->k != k_) {
      std::ostringstream os;
      os << "no uplink for round " << k_ << " from phase " << i;
      throw MissingUplink(os.str());
    }
    m[i] = uplinks[i]->m;
  }
  f_ = flow_update(flows_, m, rho_);
  monitor_.observe(f_, m);
  observed_ = true;
  ++k_;
  std::vector<DownlinkMsg> out;
  for (double v : f_) out.push_back({k_, v});
  return out;
}

bool Substation::converged() const {
  return observed_ && monitor_.primal() <= tol_primal_ && monitor_.dual() <= tol_dual_;
}

std::vector<double> Substation::mirrored_lambda() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = monitor_.lambda(i);
  return out;
}

std::vector<DownlinkMsg> substation_round(Substation& station,
                                          const std::vector<std::optional<UplinkMsg>>& uplinks) {
  return station.round(uplinks);
}

namespace {

void log_message(std::ostream* log, const char* dir, int k, std::size_t phase,
                 const std::string& payload) {
  if (!log) return;
  *log << json{{"direction", dir}, {"k", k}, {"phase", phase}, {"payload", json::parse(payload)}}
              .dump()
       << '\n';
}

}  // namespace

DistributedResult run_distributed_solve(const PerSlotProblem& problem, const AdmmOptions& options,
                                        std::ostream* log) {
  const std::size_t n = problem.size();
  const double rho = options.rho;
  if (!(rho > 0.0)) throw InvalidConfig("ADMM penalty rho must be positive");
  if (options.start) throw InvalidConfig("the distributed protocol always starts from zero");

  std::vector<PhaseAgent> agents;
  agents.reserve(n);
  for (const auto& ph : problem.phases) agents.emplace_back(ph, problem.mode, rho);
  Substation station(problem.flow_set(), rho, options.tol_primal, options.tol_dual);

  DistributedResult res;
  std::vector<DownlinkMsg> down = station.initial_downlinks();
  std::vector<std::optional<UplinkMsg>> up(n);
  for (int it = 1; it <= options.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      log_message(log, "down", down[i].k, i, to_json(down[i]));
      up[i] = phase_agent_round(agents[i], down[i]);
      log_message(log, "up", up[i]->k, i, to_json(*up[i]));
    }
    res.message_count += 2 * n;
    down = substation_round(station, up);
    res.iterations = it;
    if (options.on_iterate) options.on_iterate(it, station.f(), station.mirrored_lambda());
    if (station.converged()) {
      res.converged = true;
      break;
    }
  }

  res.action = Action::zeros(n, problem.mode);
  for (std::size_t i = 0; i < n; ++i) {
    const FinalReport rep = agents[i].report();
    if (log) {
      *log << json{{"direction", "report"},
                   {"k", station.k()},
                   {"phase", i},
                   {"payload", {{"l", rep.l}, {"u_plus", rep.u_plus}, {"u_minus", rep.u_minus}}}}
                  .dump()
           << '\n';
    }
    res.action.l[i] = rep.l;
    res.action.u_plus[i] = rep.u_plus;
    res.action.u_minus[i] = rep.u_minus;
    ++res.report_count;
  }
  res.action.f = station.f();
  res.primal_residual = station.primal_residual();
  res.dual_residual = station.dual_residual();
  res.lambda = station.mirrored_lambda();
  res.objective = slot_objective(problem, res.action);
  if (!res.converged && options.throw_on_nonconverged) {
    std::ostringstream os;
    os << "distributed ADMM did not converge in " << options.max_iter << " iterations (primal "
       << res.primal_residual << ", dual " << res.dual_residual << ")";
    throw Nonconverged(os.str(), res.primal_residual, res.dual_residual);
  }
  return res;
}

SlotSolver distributed_solver(AdmmOptions options) {
  return [options](const PerSlotProblem& p) {
    const DistributedResult d = run_distributed_solve(p, options);
    SolveResult r;
    r.action = d.action;
    r.objective = d.objective;
    r.state.k = d.iterations;
    r.state.l = d.action.l;
    r.state.u_plus = d.action.u_plus;
    r.state.u_minus = d.action.u_minus;
    r.state.f = d.action.f;
    r.state.lambda = d.lambda;
    r.state.rho = options.rho;
    r.state.primal_residual = d.primal_residual;
    r.state.dual_residual = d.dual_residual;
    r.state.converged = d.converged;
    return r;
  };
}

}  // namespace phasebal
