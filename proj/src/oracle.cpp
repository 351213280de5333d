#include <algorithm>
#include <cmath>

#include "phasebal/polygon.hpp"
#include "phasebal/solver.hpp"
#include "spg.hpp"

namespace phasebal {

namespace {

// Decision vector layout: per storage phase one slot (ideal u) or two
// (u+, u-), followed by the N flows. l is implied by balance.
struct Layout {
  std::vector<int> storage_offset;  // -1 for phases without storage
  std::size_t f_offset = 0;
  std::size_t size = 0;
};

Layout make_layout(const PerSlotProblem& p) {
  Layout lay;
  std::size_t pos = 0;
  for (const auto& ph : p.phases) {
    if (ph.has_storage) {
      lay.storage_offset.push_back(static_cast<int>(pos));
      pos += p.mode == StorageMode::Ideal ? 1 : 2;
    } else {
      lay.storage_offset.push_back(-1);
    }
  }
  lay.f_offset = pos;
  lay.size = pos + p.size();
  return lay;
}

Action to_action(const PerSlotProblem& p, const Layout& lay, const std::vector<double>& x) {
  const std::size_t n = p.size();
  Action a = Action::zeros(n, p.mode);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ph = p.phases[i];
    const int off = lay.storage_offset[i];
    if (off >= 0) {
      if (p.mode == StorageMode::Ideal) {
        a.u_plus[i] = std::max(x[off], 0.0);
        a.u_minus[i] = std::max(-x[off], 0.0);
      } else {
        a.u_plus[i] = x[off];
        a.u_minus[i] = x[off + 1];
      }
    }
    a.f[i] = x[lay.f_offset + i];
    double draw = 0.0;
    if (off >= 0) {
      draw = p.mode == StorageMode::Ideal ? x[off]
                                          : x[off] / ph.eta_plus - ph.eta_minus * x[off + 1];
    }
    a.l[i] = draw - a.f[i] - ph.r;
  }
  return a;
}

double objective(const PerSlotProblem& p, const Layout& lay, const std::vector<double>& x) {
  return slot_objective(p, to_action(p, lay, x));
}

std::vector<double> gradient(const PerSlotProblem& p, const Layout& lay,
                             const std::vector<double>& x) {
  const std::size_t n = p.size();
  std::vector<double> g(lay.size, 0.0);
  const Action a = to_action(p, lay, x);
  double f_bar = 0.0;
  for (double v : a.f) f_bar += v;
  f_bar /= static_cast<double>(n);
  double mean_dF = 0.0;
  for (double v : a.f) mean_dF += p.loss.derivative(v - f_bar);
  mean_dF /= static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& ph = p.phases[i];
    const double dC = ph.cost_l.derivative(a.l[i]);
    g[lay.f_offset + i] = -dC + p.loss.derivative(a.f[i] - f_bar) - mean_dF;
    const int off = lay.storage_offset[i];
    if (off < 0) continue;
    if (p.mode == StorageMode::Ideal) {
      g[off] = ph.price + ph.storage_weight + ph.cost_deg.derivative(x[off]) + dC;
    } else {
      g[off] = ph.price / ph.eta_plus + ph.storage_weight + ph.cost_deg.derivative(x[off]) +
               dC / ph.eta_plus;
      g[off + 1] = -ph.price * ph.eta_minus - ph.storage_weight -
                   ph.cost_deg.derivative(-x[off + 1]) - ph.eta_minus * dC;
    }
  }
  return g;
}

std::vector<double> project(const PerSlotProblem& p, const Layout& lay, std::vector<double> x) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& ph = p.phases[i];
    const int off = lay.storage_offset[i];
    if (off >= 0) {
      if (p.mode == StorageMode::Ideal) {
        x[off] = std::clamp(x[off], ph.net_lo, ph.net_hi);
      } else {
        const auto poly = ConvexPolygon::storage_set(ph.u_max, ph.net_lo, ph.net_hi);
        const Point2 q = poly.project({x[off], x[off + 1]});
        x[off] = std::clamp(q.x, 0.0, ph.u_max);
        x[off + 1] = std::clamp(q.y, 0.0, ph.u_max);
      }
    }
    x[lay.f_offset + i] = std::clamp(x[lay.f_offset + i], p.f_min[i], p.f_max[i]);
  }
  return x;
}

}  // namespace

OracleResult oracle_solve(const PerSlotProblem& problem, double tol, int max_iter) {
  const Layout lay = make_layout(problem);
  const auto res = detail::spg_minimize(
      [&](const std::vector<double>& x) { return objective(problem, lay, x); },
      [&](const std::vector<double>& x) { return gradient(problem, lay, x); },
      [&](std::vector<double> x) { return project(problem, lay, std::move(x)); },
      std::vector<double>(lay.size, 0.0), tol, max_iter);
  OracleResult out;
  out.iterations = res.iterations;
  out.gradient_mapping = res.mapping;
  out.action = to_action(problem, lay, res.x);
  out.objective = objective(problem, lay, res.x);
  return out;
}

}  // namespace phasebal
