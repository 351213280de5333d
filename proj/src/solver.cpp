#include "phasebal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "phasebal/errors.hpp"
#include "phasebal/polygon.hpp"
#include "spg.hpp"

namespace phasebal {

PerSlotProblem build_slot_problem(const SystemConfig& cfg, const SystemState& state,
                                  StorageMode mode, std::span<const double> weights,
                                  std::span<const double> net_lo, std::span<const double> net_hi) {
  PerSlotProblem p;
  p.mode = mode;
  p.loss = cfg.loss;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& ph = cfg.phases[i];
    PhaseProblem pp;
    pp.cost_l = ph.cost_l;
    pp.cost_deg = ph.cost_deg;
    pp.price = state.p;
    pp.r = state.r[i];
    if (ph.storage) {
      pp.has_storage = true;
      pp.storage_weight = weights[i];
      pp.eta_plus = ph.storage->eta_plus;
      pp.eta_minus = ph.storage->eta_minus;
      pp.u_max = ph.storage->u_max;
      pp.net_lo = net_lo[i];
      pp.net_hi = net_hi[i];
    }
    p.phases.push_back(pp);
    p.f_min.push_back(ph.f_min);
    p.f_max.push_back(ph.f_max);
  }
  return p;
}

double block_draw(const PhaseProblem& phase, StorageMode mode, const BlockSolution& b) {
  if (!phase.has_storage) return 0.0;
  if (mode == StorageMode::Ideal) return b.u_plus - b.u_minus;
  return b.u_plus / phase.eta_plus - phase.eta_minus * b.u_minus;
}

double coupling_term(const PhaseProblem& phase, StorageMode mode, const BlockSolution& b) {
  return phase.r + b.l - block_draw(phase, mode, b);
}

namespace {

constexpr int kBisectionSteps = 200;

// Root of an increasing function on [lo, hi], clipped to the interval.
template <typename Fn>
double clipped_root(Fn&& g, double lo, double hi) {
  if (g(lo) >= 0.0) return lo;
  if (g(hi) <= 0.0) return hi;
  for (int it = 0; it < kBisectionSteps && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Root of an increasing, unbounded-domain function, bracketing outward from x0.
template <typename Fn>
double free_root(Fn&& g, double x0) {
  double step = 1.0;
  double lo = x0;
  double hi = x0;
  if (g(x0) < 0.0) {
    while (g(hi) < 0.0) {
      lo = hi;
      hi += step;
      step *= 2.0;
      if (!std::isfinite(hi)) throw NonconvergedBlock("cannot bracket controllable-flow minimizer");
    }
  } else {
    while (g(lo) > 0.0) {
      hi = lo;
      lo -= step;
      step *= 2.0;
      if (!std::isfinite(lo)) throw NonconvergedBlock("cannot bracket controllable-flow minimizer");
    }
  }
  return clipped_root(g, lo, hi);
}

// argmin over [lo, hi] of curv/2 x^2 + lin x.
double line_min(double curv, double lin, double lo, double hi) {
  if (curv > 0.0) return std::clamp(-lin / curv, lo, hi);
  if (lin > 0.0) return lo;
  if (lin < 0.0) return hi;
  return std::clamp(0.0, lo, hi);
}

void split_net(double u, BlockSolution& out) {
  out.u_plus = std::max(u, 0.0);
  out.u_minus = std::max(-u, 0.0);
}

// All pieces quadratic: l is eliminated in closed form, leaving a convex
// quadratic in the storage variables.
BlockSolution quadratic_block(const PhaseProblem& ph, StorageMode mode, double c, double rho) {
  const auto& C = ph.cost_l.coeffs();
  const auto& D = ph.cost_deg.coeffs();
  const double denom = 2.0 * C.a + rho;
  // min_l C(l) + rho/2 (z + l)^2 is attained at l = -(b_C + rho z)/denom and
  // has curvature k in z; its slope at z = 0 is -rho b_C / denom.
  auto l_of = [&](double z) { return -(C.b + rho * z) / denom; };
  const double k = 2.0 * C.a * rho / denom;
  const double slope0 = -rho * C.b / denom;

  BlockSolution out;
  if (!ph.has_storage) {
    out.l = l_of(c);
    return out;
  }

  const double pull = k * c + slope0;
  if (mode == StorageMode::Ideal) {
    const double u = line_min(2.0 * D.a + k, ph.price + ph.storage_weight + D.b - pull, ph.net_lo,
                              ph.net_hi);
    split_net(u, out);
    out.l = l_of(c - u);
    return out;
  }

  // Non-ideal: draw = e . (u+, u-) with e = (1/eta+, -eta-).
  const double e0 = 1.0 / ph.eta_plus;
  const double e1 = -ph.eta_minus;
  Quadratic2 q;
  q.h = {2.0 * D.a + k * e0 * e0, k * e0 * e1, 2.0 * D.a + k * e1 * e1};
  q.g = {ph.price * e0 + ph.storage_weight + D.b - e0 * pull,
         ph.price * e1 - ph.storage_weight - D.b - e1 * pull};

  // The two complementary faces first, charge-only and discharge-only, each
  // a 1-D problem solved in closed form (at unit efficiency this is the ideal
  // update term for term). The full polygon is used only when running both
  // directions at once is strictly better.
  const bool origin_ok = ph.net_lo <= 0.0 && ph.net_hi >= 0.0;
  Point2 x{0.0, 0.0};
  double best = origin_ok ? q(x) : INFINITY;
  auto consider = [&](Point2 cand) {
    const double v = q(cand);
    if (v < best || (v == best && (cand.x > 0.0 || cand.y > 0.0))) x = cand, best = v;
  };
  if (const double hi = std::min(ph.u_max, ph.net_hi); hi >= std::max(0.0, ph.net_lo)) {
    consider({line_min(q.h[0], q.g[0], std::max(0.0, ph.net_lo), hi), 0.0});
  }
  if (const double hi = std::min(ph.u_max, -ph.net_lo); hi >= std::max(0.0, -ph.net_hi)) {
    consider({0.0, line_min(q.h[2], q.g[1], std::max(0.0, -ph.net_hi), hi)});
  }
  const auto poly = ConvexPolygon::storage_set(ph.u_max, ph.net_lo, ph.net_hi);
  const Point2 joint = minimize_over(q, poly, x);
  if (q(joint) < best - 1e-12 * (1.0 + std::abs(best))) x = joint;
  out.u_plus = std::clamp(x.x, 0.0, ph.u_max);
  out.u_minus = std::clamp(x.y, 0.0, ph.u_max);
  out.l = l_of(c - (out.u_plus * e0 + out.u_minus * e1));
  return out;
}

// General convex costs: l solved by derivative bisection inside an outer
// bisection (ideal) or projected gradient over (u+, u-) (non-ideal).
BlockSolution general_block(const PhaseProblem& ph, StorageMode mode, double c, double rho) {
  auto l_of = [&](double z) {
    return free_root([&](double l) { return ph.cost_l.derivative(l) + rho * (z + l); }, -z);
  };

  BlockSolution out;
  if (!ph.has_storage) {
    out.l = l_of(c);
    return out;
  }

  if (mode == StorageMode::Ideal) {
    auto dpsi = [&](double u) {
      const double z = c - u;
      const double l = l_of(z);
      return ph.price + ph.storage_weight + ph.cost_deg.derivative(u) - rho * (z + l);
    };
    const double u = clipped_root(dpsi, ph.net_lo, ph.net_hi);
    split_net(u, out);
    out.l = l_of(c - u);
    return out;
  }

  // Non-ideal: l eliminated through its envelope, then projected gradient
  // over the (u+, u-) polygon from the origin.
  const double e0 = 1.0 / ph.eta_plus;
  const double e1 = -ph.eta_minus;
  const auto poly = ConvexPolygon::storage_set(ph.u_max, ph.net_lo, ph.net_hi);
  auto value = [&](const std::vector<double>& x) {
    const double draw = x[0] * e0 + x[1] * e1;
    const double z = c - draw;
    const double l = l_of(z);
    return ph.price * draw + ph.cost_deg.value(x[0]) + ph.cost_deg.value(-x[1]) +
           ph.storage_weight * (x[0] - x[1]) + ph.cost_l.value(l) + 0.5 * rho * (z + l) * (z + l);
  };
  auto grad = [&](const std::vector<double>& x) {
    const double z = c - (x[0] * e0 + x[1] * e1);
    const double pull = rho * (z + l_of(z));
    return std::vector<double>{
        ph.price * e0 + ph.cost_deg.derivative(x[0]) + ph.storage_weight - e0 * pull,
        ph.price * e1 - ph.cost_deg.derivative(-x[1]) - ph.storage_weight - e1 * pull};
  };
  auto project = [&](std::vector<double> x) {
    const Point2 q = poly.project({x[0], x[1]});
    return std::vector<double>{std::clamp(q.x, 0.0, ph.u_max), std::clamp(q.y, 0.0, ph.u_max)};
  };
  const auto res = detail::spg_minimize(value, grad, project, {0.0, 0.0}, 1e-9, 100000);
  if (!res.converged) throw NonconvergedBlock("storage block did not reach first-order tolerance");
  out.u_plus = res.x[0];
  out.u_minus = res.x[1];
  out.l = l_of(c - (out.u_plus * e0 + out.u_minus * e1));
  return out;
}

}  // namespace

BlockSolution phase_block_update(const PhaseProblem& ph, StorageMode mode, double f_i,
                                 double lambda_i, double rho) {
  const double c = f_i + ph.r + lambda_i / rho;
  if (ph.cost_l.is_quadratic() && ph.cost_deg.is_quadratic()) {
    return quadratic_block(ph, mode, c, rho);
  }
  return general_block(ph, mode, c, rho);
}

BlockSolution phase_block_update(const PerSlotProblem& problem, std::size_t i, double f_i,
                                 double lambda_i, double rho) {
  return phase_block_update(problem.phases[i], problem.mode, f_i, lambda_i, rho);
}

namespace {

double flow_gradient_mapping(const FlowSet& problem, std::span<const double> m, double rho,
                             const std::vector<double>& f) {
  const std::size_t n = f.size();
  double f_bar = 0.0;
  for (double v : f) f_bar += v;
  f_bar /= static_cast<double>(n);
  double mean_dF = 0.0;
  for (double v : f) mean_dF += problem.loss.derivative(v - f_bar);
  mean_dF /= static_cast<double>(n);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double grad = problem.loss.derivative(f[i] - f_bar) - mean_dF + rho * (f[i] + m[i]);
    const double stepped = std::clamp(f[i] - grad, problem.f_min[i], problem.f_max[i]);
    worst = std::max(worst, std::abs(f[i] - stepped));
  }
  return worst;
}

// Quadratic F: sum_i a (f_i - mean f)^2 = min_mu sum_i a (f_i - mu)^2, so for
// a fixed centre mu every f_i is a clipped affine function of mu and the
// optimal centre is the unique fixed point mu = mean f(mu). That fixed-point
// map is piecewise linear with breakpoints where a component hits its box.
std::vector<double> quadratic_flow(const FlowSet& problem, std::span<const double> m,
                                   double rho) {
  const std::size_t n = m.size();
  const double a = problem.loss.coeffs().a;
  std::vector<double> f(n);
  if (a == 0.0) {
    for (std::size_t i = 0; i < n; ++i) f[i] = std::clamp(-m[i], problem.f_min[i], problem.f_max[i]);
    return f;
  }
  const double alpha = 2.0 * a / (2.0 * a + rho);
  std::vector<double> shift(n);
  for (std::size_t i = 0; i < n; ++i) shift[i] = rho * m[i] / (2.0 * a + rho);

  auto at = [&](double mu, std::size_t i) {
    return std::clamp(alpha * mu - shift[i], problem.f_min[i], problem.f_max[i]);
  };
  auto excess = [&](double mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += at(mu, i);
    return s / static_cast<double>(n) - mu;
  };

  std::vector<double> knots;
  knots.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    knots.push_back((problem.f_min[i] + shift[i]) / alpha);
    knots.push_back((problem.f_max[i] + shift[i]) / alpha);
  }
  std::sort(knots.begin(), knots.end());

  // Locate the linear piece containing the root of the decreasing excess().
  double probe;
  if (excess(knots.front()) <= 0.0) {
    probe = knots.front() - 1.0;
  } else if (excess(knots.back()) >= 0.0) {
    probe = knots.back() + 1.0;
  } else {
    std::size_t j = 0;
    while (j + 1 < knots.size() && excess(knots[j + 1]) > 0.0) ++j;
    probe = 0.5 * (knots[j] + knots[j + 1]);
  }

  // Solve the piece exactly: clipped components are constants there.
  double clipped_sum = 0.0;
  double free_shift = 0.0;
  std::size_t n_free = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = alpha * probe - shift[i];
    if (raw <= problem.f_min[i]) {
      clipped_sum += problem.f_min[i];
    } else if (raw >= problem.f_max[i]) {
      clipped_sum += problem.f_max[i];
    } else {
      free_shift += shift[i];
      ++n_free;
    }
  }
  const double mu =
      (clipped_sum - free_shift) / (static_cast<double>(n) - alpha * static_cast<double>(n_free));
  for (std::size_t i = 0; i < n; ++i) f[i] = at(mu, i);
  return f;
}

// General F: projected gradient with backtracking.
std::vector<double> general_flow(const FlowSet& problem, std::span<const double> m,
                                 double rho) {
  const std::size_t n = m.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = std::clamp(-m[i], problem.f_min[i], problem.f_max[i]);

  auto objective = [&](const std::vector<double>& x) {
    double x_bar = 0.0;
    for (double v : x) x_bar += v;
    x_bar /= static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += problem.loss.value(x[i] - x_bar) + 0.5 * rho * (x[i] + m[i]) * (x[i] + m[i]);
    }
    return s;
  };

  double step = 1.0 / rho;
  std::vector<double> grad(n), trial(n);
  for (int it = 0; it < 10000; ++it) {
    if (flow_gradient_mapping(problem, m, rho, f) <= 1e-10) return f;
    double f_bar = 0.0;
    for (double v : f) f_bar += v;
    f_bar /= static_cast<double>(n);
    double mean_dF = 0.0;
    for (double v : f) mean_dF += problem.loss.derivative(v - f_bar);
    mean_dF /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = problem.loss.derivative(f[i] - f_bar) - mean_dF + rho * (f[i] + m[i]);
    }
    const double base = objective(f);
    for (;;) {
      double lin = 0.0;
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        trial[i] = std::clamp(f[i] - step * grad[i], problem.f_min[i], problem.f_max[i]);
        lin += grad[i] * (trial[i] - f[i]);
        sq += (trial[i] - f[i]) * (trial[i] - f[i]);
      }
      if (objective(trial) <= base + lin + sq / (2.0 * step) + 1e-15 * std::abs(base) ||
          step < 1e-14) {
        break;
      }
      step *= 0.5;
    }
    f = trial;
    step *= 1.5;
  }
  return f;
}

}  // namespace

std::vector<double> flow_update(const PerSlotProblem& problem, std::span<const double> m,
                                double rho) {
  return flow_update(problem.flow_set(), m, rho);
}

std::vector<double> flow_update(const FlowSet& problem, std::span<const double> m, double rho) {
  std::vector<double> f = problem.loss.is_quadratic() ? quadratic_flow(problem, m, rho)
                                                      : general_flow(problem, m, rho);
  double scale = 1.0;
  for (double v : m) scale = std::max(scale, std::abs(v));
  const double gm = flow_gradient_mapping(problem, m, rho, f);
  if (!(gm <= 1e-8 * rho * scale)) {
    throw Nonconverged("flow update did not reach its first-order tolerance", gm, 0.0);
  }
  return f;
}

double slot_objective(const PerSlotProblem& problem, const Action& action) {
  const std::size_t n = problem.size();
  double f_bar = 0.0;
  for (double v : action.f) f_bar += v;
  f_bar /= static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ph = problem.phases[i];
    if (ph.has_storage) {
      const double up = action.u_plus[i];
      const double um = action.u_minus[i];
      if (problem.mode == StorageMode::Ideal) {
        const double u = up - um;
        total += (ph.price + ph.storage_weight) * u + ph.cost_deg.value(u);
      } else {
        total += ph.price * (up / ph.eta_plus - ph.eta_minus * um) + ph.cost_deg.value(up) +
                 ph.cost_deg.value(-um) + ph.storage_weight * (up - um);
      }
    }
    total += ph.cost_l.value(action.l[i]) + problem.loss.value(action.f[i] - f_bar);
  }
  return total;
}

ResidualMonitor::ResidualMonitor(std::vector<double> f0, std::vector<double> scaled_lambda0,
                                 double rho)
    : f_prev_(std::move(f0)), scaled_lambda_(std::move(scaled_lambda0)), rho_(rho) {}

void ResidualMonitor::observe(std::span<const double> f_next, std::span<const double> m) {
  primal_ = 0.0;
  dual_ = 0.0;
  for (std::size_t i = 0; i < f_next.size(); ++i) {
    const double next_scaled = f_next[i] + m[i];
    primal_ = std::max(primal_, std::abs(next_scaled - scaled_lambda_[i]));
    dual_ = std::max(dual_, rho_ * std::abs(f_next[i] - f_prev_[i]));
    scaled_lambda_[i] = next_scaled;
    f_prev_[i] = f_next[i];
  }
}

SolveResult solve(const PerSlotProblem& problem, const AdmmOptions& options) {
  const std::size_t n = problem.size();
  const double rho = options.rho;
  if (!(rho > 0.0)) throw InvalidConfig("ADMM penalty rho must be positive");

  AdmmState st;
  st.rho = rho;
  st.f.assign(n, 0.0);
  st.lambda.assign(n, 0.0);
  if (options.start) {
    st.f = options.start->f;
    st.lambda = options.start->lambda;
  }
  st.l.assign(n, 0.0);
  st.u_plus.assign(n, 0.0);
  st.u_minus.assign(n, 0.0);

  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = st.lambda[i] / rho;
  ResidualMonitor monitor(st.f, scaled, rho);

  SolveResult result;
  std::vector<double> m(n), coupling(n);
  std::vector<BlockSolution> blocks(n);
  for (int k = 1; k <= options.max_iter; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      blocks[i] = phase_block_update(problem, i, st.f[i], st.lambda[i], rho);
      coupling[i] = coupling_term(problem.phases[i], problem.mode, blocks[i]);
      m[i] = coupling[i] + st.lambda[i] / rho;
    }
    const std::vector<double> f_next = flow_update(problem, m, rho);
    for (std::size_t i = 0; i < n; ++i) {
      st.lambda[i] = dual_update(st.lambda[i], rho, f_next[i] + coupling[i]);
      st.l[i] = blocks[i].l;
      st.u_plus[i] = blocks[i].u_plus;
      st.u_minus[i] = blocks[i].u_minus;
    }
    monitor.observe(f_next, m);
    st.f = f_next;
    st.k = k;
    st.primal_residual = monitor.primal();
    st.dual_residual = monitor.dual();

    if (options.on_iterate) options.on_iterate(k, st.f, st.lambda);
    if (options.record_trace) {
      Action a{problem.mode, st.l, st.u_plus, st.u_minus, st.f};
      result.trace.push_back({k, slot_objective(problem, a), st.primal_residual, st.dual_residual});
    }
    if (st.primal_residual <= options.tol_primal && st.dual_residual <= options.tol_dual) {
      st.converged = true;
      break;
    }
  }

  result.action = Action{problem.mode, st.l, st.u_plus, st.u_minus, st.f};
  result.objective = slot_objective(problem, result.action);
  result.state = std::move(st);
  if (!result.state.converged && options.throw_on_nonconverged) {
    std::ostringstream os;
    os << "ADMM did not converge in " << options.max_iter << " iterations (primal "
       << result.state.primal_residual << ", dual " << result.state.dual_residual << ")";
    throw Nonconverged(os.str(), result.state.primal_residual, result.state.dual_residual);
  }
  return result;
}

}  // namespace phasebal
