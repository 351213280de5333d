#include "phasebal/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>

#include "phasebal/baseline.hpp"
#include "phasebal/errors.hpp"

namespace phasebal {

std::vector<std::string> sweep_parameters() {
  return {"s_max", "u_max", "phase_corr", "phase_corr_13", "time_corr",
          "round_trip", "n_phases", "alloc_s1"};
}

namespace {

void set_corr(Matrix& m, std::size_t i, std::size_t j, double v) {
  m[i][j] = v;
  m[j][i] = v;
}

Matrix identity_matrix(std::size_t n) {
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

}  // namespace

RunConfig apply_sweep_value(const RunConfig& base, const std::string& parameter, double value) {
  RunConfig run = base;
  auto& phases = run.system.phases;
  const std::size_t n = phases.size();
  auto& sc = run.scenario;
  if (sc.phase_corr.empty()) sc.phase_corr = identity_matrix(n);

  if (parameter == "s_max") {
    for (auto& ph : phases) {
      if (ph.storage) ph.storage->s_max = value;
    }
  } else if (parameter == "u_max") {
    for (auto& ph : phases) {
      if (ph.storage) ph.storage->u_max = value;
    }
  } else if (parameter == "phase_corr") {
    set_corr(sc.phase_corr, 0, 1, value);
  } else if (parameter == "phase_corr_13") {
    if (n < 3) throw InvalidConfig("phase_corr_13 needs at least three phases");
    set_corr(sc.phase_corr, 0, 1, value);
    set_corr(sc.phase_corr, 0, 2, value);
  } else if (parameter == "time_corr") {
    sc.time_corr = value;
  } else if (parameter == "round_trip") {
    if (!(value > 0.0)) throw InfeasibleSweepPoint("round-trip efficiency must be positive");
    const double eta = std::sqrt(value);
    for (auto& ph : phases) {
      if (ph.storage) {
        ph.storage->eta_plus = eta;
        ph.storage->eta_minus = eta;
      }
    }
    run.mode = StorageMode::NonIdeal;
  } else if (parameter == "n_phases") {
    const double rounded = std::round(value);
    if (rounded != value || value < 1.0) {
      throw InfeasibleSweepPoint("n_phases must be a positive integer");
    }
    const auto count = static_cast<std::size_t>(value);
    const PhaseConfig proto = phases.front();
    phases.assign(count, proto);
    sc.flow_mean.assign(count, base.scenario.flow_mean.front());
    sc.flow_std.assign(count, base.scenario.flow_std.front());
    sc.phase_corr = identity_matrix(count);
    if (run.v_values) run.v_values->assign(count, run.v_values->front());
  } else if (parameter == "alloc_s1") {
    if (n != 3) throw InvalidConfig("alloc_s1 needs exactly three phases");
    for (const auto& ph : phases) {
      if (!ph.storage) throw InvalidConfig("alloc_s1 needs storage at every phase");
    }
    double total = 0.0;
    for (const auto& ph : base.system.phases) total += ph.storage->s_max;
    phases[0].storage->s_max = value;
    phases[2].storage->s_max = total - value - phases[1].storage->s_max;
  } else {
    throw InvalidConfig("unknown sweep parameter '" + parameter + "'");
  }

  try {
    validate_run_config(run);
  } catch (const ConfigError& e) {
    throw InfeasibleSweepPoint(parameter + " = " + format_double(value) + ": " + e.what());
  }
  return run;
}

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

RunSummary run_one(RunConfig run, std::uint64_t seed) {
  run.scenario.seed = seed;
  return run_simulation(run).summary;
}

}  // namespace

std::vector<double> replicate_costs(const RunConfig& run, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::future<RunSummary>> jobs;
  for (auto seed : seeds) jobs.push_back(std::async(std::launch::async, run_one, run, seed));
  std::vector<double> costs;
  for (auto& j : jobs) costs.push_back(j.get().mean_cost.total);
  return costs;
}

SweepResult run_sweep(const RunConfig& base, const std::string& parameter,
                      const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                      const std::vector<Algorithm>& algorithms) {
  SweepResult out;
  out.parameter = parameter;
  struct Pending {
    SweepRow row;
    std::vector<std::future<RunSummary>> jobs;
  };
  std::vector<Pending> pending;
  for (double v : values) {
    std::optional<RunConfig> point;
    std::string reason;
    try {
      point = apply_sweep_value(base, parameter, v);
    } catch (const InfeasibleSweepPoint& e) {
      reason = e.what();
    }
    for (Algorithm algo : algorithms) {
      Pending p;
      p.row.value = v;
      p.row.algorithm = algo;
      p.row.seeds = seeds;
      if (!point) {
        p.row.feasible = false;
        p.row.note = reason;
        p.row.mode = parameter == "round_trip" ? StorageMode::NonIdeal : base.mode;
      } else {
        RunConfig run = *point;
        run.algorithm = algo;
        p.row.mode = run.mode;
        for (auto seed : seeds) p.jobs.push_back(std::async(std::launch::async, run_one, run, seed));
      }
      pending.push_back(std::move(p));
    }
  }

  for (auto& p : pending) {
    auto& row = p.row;
    if (!row.feasible) {
      row.mean_cost = row.std_cost = row.mean_lower_bound = std::numeric_limits<double>::quiet_NaN();
      out.rows.push_back(std::move(row));
      continue;
    }
    double lb = 0.0;
    for (auto& job : p.jobs) {
      const RunSummary s = job.get();
      row.costs.push_back(s.mean_cost.total);
      row.gap = s.bounds.gap;
      row.epsilon = s.bounds.epsilon;
      lb += s.bounds.lower_bound;
    }
    const Moments m = moments(row.costs);
    row.mean_cost = m.mean;
    row.std_cost = m.std;
    row.mean_lower_bound = row.costs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : lb / static_cast<double>(row.costs.size());
    out.rows.push_back(std::move(row));
  }
  return out;
}

const SweepRow* find_row(const SweepResult& sweep, double value, Algorithm algorithm) {
  for (const auto& r : sweep.rows) {
    if (r.value == value && r.algorithm == algorithm) return &r;
  }
  return nullptr;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  os << "parameter,value,algorithm,mode,feasible,n_seeds,mean_cost,std_cost,gap,epsilon,"
        "mean_lower_bound,aggregation,seeds,costs,note\n";
  for (const auto& r : sweep.rows) {
    os << sweep.parameter << ',' << format_double(r.value) << ',' << to_string(r.algorithm) << ','
       << to_string(r.mode) << ',' << (r.feasible ? 1 : 0) << ',' << r.seeds.size() << ','
       << format_double(r.mean_cost) << ',' << format_double(r.std_cost) << ','
       << format_double(r.gap) << ',' << format_double(r.epsilon) << ','
       << format_double(r.mean_lower_bound) << ",mean_over_seeds,";
    for (std::size_t i = 0; i < r.seeds.size(); ++i) os << (i ? ";" : "") << r.seeds[i];
    os << ',';
    for (std::size_t i = 0; i < r.costs.size(); ++i) os << (i ? ";" : "") << format_double(r.costs[i]);
    std::string note = r.note;
    std::replace(note.begin(), note.end(), '"', '\'');
    os << ",\"" << note << "\"\n";
  }
}

PerSlotProblem representative_problem(const RunConfig& run, std::optional<double> energy_state) {
  validate_run_config(run);
  const auto& cfg = run.system;
  ScenarioGenerator gen(run.scenario, cfg);
  const SystemState state = *gen.next();
  ControllerState ctrl = ControllerState::initial(cfg);
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& st = cfg.phases[i].storage;
    if (!st) continue;
    ctrl.s[i] = energy_state.value_or(0.5 * (st->s_min + st->s_max));
  }
  if (run.algorithm == Algorithm::Greedy) return greedy_slot_problem(cfg, ctrl, state, run.mode);
  const auto params = make_controller_params(cfg, derive_ranges(cfg), run.mode, run.v_values);
  return proposed_slot_problem(cfg, params, ctrl, state);
}

AdmmTraceResult run_admm_trace(const PerSlotProblem& problem, const std::vector<double>& rhos,
                               int iterations) {
  AdmmTraceResult out;
  AdmmOptions ref;
  ref.rho = 5.0;
  ref.tol_primal = 1e-10;
  ref.tol_dual = 1e-10;
  ref.max_iter = 200000;
  out.reference_objective = solve(problem, ref).objective;
  out.oracle_objective = oracle_solve(problem).objective;

  const double scale = std::max(1.0, std::abs(out.reference_objective));
  for (double rho : rhos) {
    AdmmOptions o;
    o.rho = rho;
    o.tol_primal = 0.0;
    o.tol_dual = 0.0;
    o.max_iter = iterations;
    o.record_trace = true;
    o.throw_on_nonconverged = false;
    const SolveResult r = solve(problem, o);
    int increases = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& t : r.trace) {
      AdmmTraceRow row;
      row.rho = rho;
      row.k = t.k;
      row.objective = t.objective;
      row.gap = std::abs(t.objective - out.reference_objective);
      row.relative_gap = row.gap / scale;
      row.primal_residual = t.primal_residual;
      row.dual_residual = t.dual_residual;
      if (t.k > 20 && row.gap > prev && row.relative_gap > 1e-9) ++increases;
      prev = row.gap;
      out.rows.push_back(row);
    }
    out.gap_increases.push_back(increases);
  }
  return out;
}

AdmmTraceResult run_admm_trace(const RunConfig& run, const std::vector<double>& rhos,
                               int iterations) {
  return run_admm_trace(representative_problem(run), rhos, iterations);
}

void write_admm_trace_csv(std::ostream& os, const AdmmTraceResult& trace) {
  os << "rho,k,objective,gap,relative_gap,primal_residual,dual_residual,reference_objective\n";
  for (const auto& r : trace.rows) {
    os << format_double(r.rho) << ',' << r.k << ',' << format_double(r.objective) << ','
       << format_double(r.gap) << ',' << format_double(r.relative_gap) << ','
       << format_double(r.primal_residual) << ',' << format_double(r.dual_residual) << ','
       << format_double(trace.reference_objective) << '\n';
  }
}

RunConfig with_allocation(const RunConfig& base, const std::vector<double>& s_max) {
  RunConfig run = base;
  if (s_max.size() != run.system.size()) {
    throw InvalidConfig("allocation needs one capacity per phase");
  }
  for (std::size_t i = 0; i < s_max.size(); ++i) {
    auto& st = run.system.phases[i].storage;
    if (!st) throw InvalidConfig("allocation needs storage at every phase");
    st->s_max = s_max[i];
  }
  return run;
}

double allocation_bound(const RunConfig& base, const std::vector<double>& s_max) {
  const RunConfig run = with_allocation(base, s_max);
  const auto ranges = derive_ranges(run.system);
  double total = 0.0;
  for (std::size_t i = 0; i < run.system.size(); ++i) {
    const auto& ph = run.system.phases[i];
    const double v = compute_v_max(ph, ranges.phases[i], run.system.p_min, run.system.p_max, run.mode);
    total += ph.storage->u_max * ph.storage->u_max / (2.0 * v);
  }
  return total;
}

namespace {

bool same_cost(const CostFunction& a, const CostFunction& b) {
  if (!a.is_quadratic() || !b.is_quadratic()) return false;
  const auto& x = a.coeffs();
  const auto& y = b.coeffs();
  return x.a == y.a && x.b == y.b && x.c == y.c;
}

void require_homogeneous(const SystemConfig& cfg) {
  const auto& p0 = cfg.phases.front();
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& p = cfg.phases[i];
    const std::string where = "phase " + std::to_string(i);
    if (!p.storage) throw AssumptionViolation(where + " has no storage");
    const auto& a = *p.storage;
    const auto& b = *p0.storage;
    if (a.s_min != b.s_min || a.u_max != b.u_max || a.eta_plus != b.eta_plus ||
        a.eta_minus != b.eta_minus) {
      throw AssumptionViolation(where + " storage differs from phase 0 beyond capacity");
    }
    if (!same_cost(p.cost_l, p0.cost_l) || !same_cost(p.cost_deg, p0.cost_deg)) {
      throw AssumptionViolation(where + " cost functions differ from phase 0");
    }
    if (p.r_min != p0.r_min || p.r_max != p0.r_max || p.f_min != p0.f_min || p.f_max != p0.f_max) {
      throw AssumptionViolation(where + " flow bounds differ from phase 0");
    }
  }
}

}  // namespace

AllocationReport check_equal_allocation(const RunConfig& base, double s_total, double grid) {
  if (!(grid > 0.0)) throw InvalidConfig("grid resolution must be positive");
  require_homogeneous(base.system);
  const std::size_t n = base.system.size();
  const auto& st = *base.system.phases.front().storage;
  const double floor_cap = st.s_min + 2.0 * st.u_max;

  AllocationReport rep;
  rep.s_total = s_total;
  rep.grid = grid;
  rep.equal_split.assign(n, s_total / static_cast<double>(n));
  rep.best.bound = std::numeric_limits<double>::infinity();

  const auto steps = static_cast<long>(std::floor(s_total / grid + 1e-9));
  std::vector<double> caps(n);
  std::function<void(std::size_t, long)> enumerate = [&](std::size_t i, long used) {
    if (i + 1 == n) {
      caps[i] = s_total - static_cast<double>(used) * grid;
      for (double c : caps) {
        if (!(c - floor_cap > 0.0)) return;
      }
      AllocationPoint pt{caps, allocation_bound(base, caps)};
      if (pt.bound < rep.best.bound) rep.best = pt;
      rep.points.push_back(std::move(pt));
      return;
    }
    for (long k = 0; used + k <= steps; ++k) {
      caps[i] = static_cast<double>(k) * grid;
      if (!(caps[i] - floor_cap > 0.0)) continue;
      enumerate(i + 1, used + k);
    }
  };
  enumerate(0, 0);
  if (rep.points.empty()) throw InfeasibleSweepPoint("no feasible allocation on the grid");

  rep.argmin_is_equal = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(rep.best.s_max[i] - rep.equal_split[i]) > grid + 1e-12) rep.argmin_is_equal = false;
  }
  return rep;
}

void write_allocation_csv(std::ostream& os, const AllocationReport& report) {
  const std::size_t n = report.equal_split.size();
  for (std::size_t i = 1; i <= n; ++i) os << "s_max_" << i << ',';
  os << "bound,is_best\n";
  for (const auto& p : report.points) {
    for (double c : p.s_max) os << format_double(c) << ',';
    os << format_double(p.bound) << ',' << (p.s_max == report.best.s_max ? 1 : 0) << '\n';
  }
}

}  // namespace phasebal
