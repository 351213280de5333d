#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

namespace phasebal::detail {

struct SpgResult {
  std::vector<double> x;
  double value = 0.0;
  double mapping = 0.0;  // ||x - P(x - grad)||_inf at exit
  int iterations = 0;
  bool converged = false;
};

// Spectral projected gradient: Barzilai-Borwein steps with a nonmonotone
// Armijo search over the last few objective values. Stops when the unit-step
// gradient mapping is at most tol.
template <typename Value, typename Grad, typename Project>
SpgResult spg_minimize(Value&& value, Grad&& grad, Project&& project, std::vector<double> x,
                       double tol, int max_iter) {
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  const std::size_t n = x.size();

  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
    return s;
  };
  auto mapping = [&](const std::vector<double>& at, const std::vector<double>& g) {
    std::vector<double> y(n);
    for (std::size_t j = 0; j < n; ++j) y[j] = at[j] - g[j];
    y = project(std::move(y));
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(at[j] - y[j]));
    return worst;
  };

  SpgResult res;
  x = project(std::move(x));
  double fx = value(x);
  std::vector<double> g = grad(x);
  std::deque<double> history{fx};
  double alpha = 1.0;
  std::vector<double> d(n), trial(n), s(n), yv(n);

  int it = 0;
  for (; it < max_iter; ++it) {
    res.mapping = mapping(x, g);
    if (res.mapping <= tol) {
      res.converged = true;
      break;
    }
    for (std::size_t j = 0; j < n; ++j) d[j] = x[j] - alpha * g[j];
    d = project(std::move(d));
    for (std::size_t j = 0; j < n; ++j) d[j] -= x[j];
    const double gd = dot(g, d);
    const double f_ref = *std::max_element(history.begin(), history.end());
    const double slack = 1e-14 * (1.0 + std::abs(f_ref));

    double lambda = 1.0;
    double ft = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < n; ++j) trial[j] = x[j] + lambda * d[j];
      ft = value(trial);
      if (ft <= f_ref + kArmijo * lambda * gd + slack) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;  // no representable progress left

    const std::vector<double> gt = grad(trial);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = trial[j] - x[j];
      yv[j] = gt[j] - g[j];
    }
    const double sy = dot(s, yv);
    const double ss = dot(s, s);
    alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : 1e12;
    x = trial;
    fx = ft;
    g = gt;
    history.push_back(fx);
    if (history.size() > kMemory) history.pop_front();
  }
  if (!res.converged) res.mapping = mapping(x, g);
  res.converged = res.mapping <= tol;
  res.iterations = it;
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace phasebal::detail
