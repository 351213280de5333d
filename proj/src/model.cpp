#include "phasebal/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phasebal/errors.hpp"

namespace phasebal {

std::string to_string(StorageMode mode) {
  return mode == StorageMode::Ideal ? "ideal" : "nonideal";
}

StorageMode storage_mode_from_string(const std::string& text) {
  if (text == "ideal") return StorageMode::Ideal;
  if (text == "nonideal" || text == "non-ideal") return StorageMode::NonIdeal;
  throw InvalidConfig("unknown storage mode '" + text + "'");
}

CostFunction CostFunction::quadratic(double a, double b, double c) {
  CostFunction fn;
  fn.kind_ = Kind::Quadratic;
  fn.coeffs_ = {a, b, c};
  return fn;
}

CostFunction CostFunction::general(ScalarFn value, ScalarFn derivative) {
  CostFunction fn;
  fn.kind_ = Kind::General;
  fn.value_ = std::move(value);
  fn.derivative_ = std::move(derivative);
  return fn;
}

double CostFunction::value(double x) const {
  if (kind_ == Kind::Quadratic) return (coeffs_.a * x + coeffs_.b) * x + coeffs_.c;
  return value_(x);
}

double CostFunction::derivative(double x) const {
  if (kind_ == Kind::Quadratic) return 2.0 * coeffs_.a * x + coeffs_.b;
  return derivative_(x);
}

double eval_cost(const CostFunction& fn, double x) { return fn.value(x); }

double eval_derivative(const CostFunction& fn, double x) { return fn.derivative(x); }

SystemConfig default_system_config(std::size_t n_phases) {
  SystemConfig cfg;
  cfg.loss = CostFunction::quadratic(10.0);
  cfg.p_min = 7.0;
  cfg.p_max = 12.0;
  for (std::size_t i = 0; i < n_phases; ++i) {
    PhaseConfig phase;
    phase.storage = StorageParams{2.0, 10.0, 1.0, 1.0, 1.0, 2.0};
    phase.cost_l = CostFunction::quadratic(1.5);
    phase.cost_deg = CostFunction::quadratic(0.2);
    phase.r_min = -8.0;
    phase.r_max = 8.0;
    phase.f_min = -5.0;
    phase.f_max = 5.0;
    cfg.phases.push_back(phase);
  }
  return cfg;
}

namespace {

[[noreturn]] void reject(std::size_t phase, const std::string& what) {
  std::ostringstream os;
  os << "phase " << phase << ": " << what;
  throw InvalidConfig(os.str());
}

void check_cost(const CostFunction& fn, std::size_t phase, const char* name) {
  if (!fn.is_quadratic()) return;
  const auto& q = fn.coeffs();
  if (!std::isfinite(q.a) || !std::isfinite(q.b) || !std::isfinite(q.c)) {
    reject(phase, std::string(name) + " has non-finite coefficients");
  }
  if (q.a < 0.0) reject(phase, std::string(name) + " is not convex (a < 0)");
}

}  // namespace

SystemConfig validate_config(const SystemConfig& cfg) {
  if (cfg.size() < 2) throw InvalidConfig("at least 2 phases are required");
  if (!(cfg.p_min <= cfg.p_max)) throw InvalidConfig("p_min must not exceed p_max");
  if (cfg.loss.is_quadratic() && cfg.loss.coeffs().a < 0.0) {
    throw InvalidConfig("loss function is not convex (a < 0)");
  }
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& ph = cfg.phases[i];
    if (!(ph.r_min < ph.r_max)) reject(i, "r_min must be below r_max");
    if (!(ph.f_min < ph.f_max)) reject(i, "f_min must be below f_max");
    check_cost(ph.cost_l, i, "controllable cost");
    check_cost(ph.cost_deg, i, "degradation cost");
    if (!ph.storage) continue;
    const auto& st = *ph.storage;
    if (!(st.s_min >= 0.0 && st.s_min < st.s_max)) reject(i, "need 0 <= s_min < s_max");
    if (!(st.u_max > 0.0)) reject(i, "u_max must be positive");
    if (!(st.s_max - st.s_min - 2.0 * st.u_max > 0.0)) {
      reject(i, "s_max - s_min - 2 u_max must be positive");
    }
    if (!(st.eta_plus > 0.0 && st.eta_plus <= 1.0)) reject(i, "eta_plus must lie in (0, 1]");
    if (!(st.eta_minus > 0.0 && st.eta_minus <= 1.0)) reject(i, "eta_minus must lie in (0, 1]");
    if (!(st.s_initial >= st.s_min && st.s_initial <= st.s_max)) {
      reject(i, "s_initial must lie in [s_min, s_max]");
    }
  }
  return cfg;
}

Action Action::zeros(std::size_t n, StorageMode mode) {
  Action a;
  a.mode = mode;
  a.l.assign(n, 0.0);
  a.u_plus.assign(n, 0.0);
  a.u_minus.assign(n, 0.0);
  a.f.assign(n, 0.0);
  return a;
}

double storage_draw(const PhaseConfig& phase, StorageMode mode, double u_plus, double u_minus) {
  if (!phase.storage) return 0.0;
  if (mode == StorageMode::Ideal) return u_plus - u_minus;
  return u_plus / phase.storage->eta_plus - phase.storage->eta_minus * u_minus;
}

double balance_residual(const SystemConfig& cfg, const SystemState& state, const Action& action,
                        std::size_t i) {
  const double draw = storage_draw(cfg.phases[i], action.mode, action.u_plus[i], action.u_minus[i]);
  return action.f[i] + state.r[i] + action.l[i] - draw;
}

double max_balance_residual(const SystemConfig& cfg, const SystemState& state,
                            const Action& action) {
  double worst = 0.0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    worst = std::max(worst, std::abs(balance_residual(cfg, state, action, i)));
  }
  return worst;
}

DerivedRanges derive_ranges(const SystemConfig& cfg) {
  DerivedRanges out;
  out.phases.reserve(cfg.size());
  for (const auto& ph : cfg.phases) {
    PhaseRanges pr;
    // l = u+/eta+ - eta- u- - f - r: each term is monotone in its own
    // variable, so the extremes sit at box corners.
    double draw_max = 0.0;
    double draw_min = 0.0;
    double u_max = 0.0;
    if (ph.storage) {
      u_max = ph.storage->u_max;
      draw_max = u_max / ph.storage->eta_plus;
      draw_min = -ph.storage->eta_minus * u_max;
    }
    pr.l_max = draw_max - ph.f_min - ph.r_min;
    pr.l_min = draw_min - ph.f_max - ph.r_max;

    // Convex functions have monotone derivatives and attain their maximum
    // over an interval at an endpoint.
    pr.cp_min = ph.cost_l.derivative(pr.l_min);
    pr.cp_max = ph.cost_l.derivative(pr.l_max);
    pr.c_max = std::max(ph.cost_l.value(pr.l_min), ph.cost_l.value(pr.l_max));
    pr.dp_min = ph.cost_deg.derivative(-u_max);
    pr.dp_max = ph.cost_deg.derivative(u_max);
    pr.d_max = std::max(ph.cost_deg.value(-u_max), ph.cost_deg.value(u_max));
    out.phases.push_back(pr);
  }
  return out;
}

CostBreakdown system_cost(const SystemConfig& cfg, const SystemState& state, const Action& action) {
  const std::size_t n = cfg.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double res = balance_residual(cfg, state, action, i);
    if (!(std::abs(res) <= kBalanceTolerance)) {
      std::ostringstream os;
      os << "power balance violated at phase " << i << " (residual " << res << " kW)";
      throw BalanceViolation(os.str());
    }
  }

  CostBreakdown cb;
  double f_bar = 0.0;
  for (double f : action.f) f_bar += f;
  f_bar /= static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& ph = cfg.phases[i];
    if (ph.storage) {
      const double up = action.u_plus[i];
      const double um = action.u_minus[i];
      if (action.mode == StorageMode::Ideal) {
        cb.arbitrage += state.p * (up - um);
        cb.degradation += ph.cost_deg.value(up - um);
      } else {
        cb.arbitrage += state.p * (up / ph.storage->eta_plus - ph.storage->eta_minus * um);
        cb.degradation += ph.cost_deg.value(up) + ph.cost_deg.value(-um);
      }
    }
    cb.controllable += ph.cost_l.value(action.l[i]);
    cb.imbalance += cfg.loss.value(action.f[i] - f_bar);
  }
  cb.total = cb.arbitrage + cb.degradation + cb.controllable + cb.imbalance;
  return cb;
}

}  // namespace phasebal
