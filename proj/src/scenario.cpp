#include "phasebal/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "phasebal/errors.hpp"

namespace phasebal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix identity(std::size_t n) {
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

}  // namespace

ScenarioSpec default_scenario_spec(std::size_t n_phases, std::uint64_t seed, std::size_t horizon) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.horizon = horizon;
  spec.flow_mean.assign(n_phases, 0.0);
  spec.flow_std.assign(n_phases, 4.0);
  spec.phase_corr = identity(n_phases);
  return spec;
}

Matrix psd_cholesky(const Matrix& m, double tol) {
  const std::size_t n = m.size();
  Matrix l(n, std::vector<double>(n, 0.0));
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(m[i][i]));
  const double eps = tol * scale;

  for (std::size_t j = 0; j < n; ++j) {
    double d = m[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
    if (d < -eps) throw NonPSDCorrelation("correlation matrix is not positive semidefinite");
    if (d <= eps) {
      // Zero pivot: column j must already be explained by earlier columns.
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = m[i][j];
        for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
        if (std::abs(s) > std::sqrt(eps)) {
          throw NonPSDCorrelation("correlation matrix is not positive semidefinite");
        }
      }
      continue;
    }
    l[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = s / l[j][j];
    }
  }
  return l;
}

double PortableRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double PortableRng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

ScenarioGenerator::ScenarioGenerator(const ScenarioSpec& spec, const SystemConfig& cfg)
    : spec_(spec),
      p_min_(cfg.p_min),
      p_max_(cfg.p_max),
      flow_rng_(spec.seed),
      price_rng_(splitmix64(spec.seed)) {
  const std::size_t n = cfg.size();
  if (spec_.rng != kRngAlgorithm) {
    throw InvalidConfig("unsupported rng '" + spec_.rng + "', expected " + kRngAlgorithm);
  }
  if (spec_.flow_mean.size() != n || spec_.flow_std.size() != n) {
    throw InvalidConfig("scenario flow_mean/flow_std must have one entry per phase");
  }
  if (spec_.phase_corr.empty()) spec_.phase_corr = identity(n);
  const auto& corr = spec_.phase_corr;
  if (corr.size() != n) throw InvalidConfig("phase_corr must be N x N");
  for (std::size_t i = 0; i < n; ++i) {
    if (corr[i].size() != n) throw InvalidConfig("phase_corr must be N x N");
    if (corr[i][i] != 1.0) throw InvalidConfig("phase_corr must have a unit diagonal");
    if (!(spec_.flow_std[i] >= 0.0)) throw InvalidConfig("flow_std must be nonnegative");
    for (std::size_t j = 0; j < i; ++j) {
      if (corr[i][j] != corr[j][i]) throw InvalidConfig("phase_corr must be symmetric");
    }
  }
  if (!(std::abs(spec_.time_corr) < 1.0)) throw InvalidConfig("time_corr must lie in (-1, 1)");

  // factor the correlation, then scale rows, so zero-std phases stay valid
  factor_ = psd_cholesky(corr);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : factor_[i]) v *= spec_.flow_std[i];
  }

  for (const auto& ph : cfg.phases) {
    r_min_.push_back(ph.r_min);
    r_max_.push_back(ph.r_max);
  }
  z_.assign(n, 0.0);
  latent_.assign(n, 0.0);
}

double ScenarioGenerator::sample_price() {
  return p_min_ + (p_max_ - p_min_) * price_rng_.uniform();
}

std::optional<SystemState> ScenarioGenerator::next() {
  if (t_ >= spec_.horizon) return std::nullopt;
  const std::size_t n = z_.size();

  std::vector<double> white(n);
  for (auto& w : white) w = flow_rng_.normal();
  std::vector<double> shock(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= i; ++k) shock[i] += factor_[i][k] * white[k];
  }

  const double rho = spec_.time_corr;
  if (t_ == 0) {
    z_ = shock;
  } else {
    const double innov = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) z_[i] = rho * z_[i] + innov * shock[i];
  }

  SystemState state;
  state.slot = t_;
  state.r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    latent_[i] = spec_.flow_mean[i] + z_[i];
    state.r[i] = std::clamp(latent_[i], r_min_[i], r_max_[i]);
  }
  state.p = sample_price();
  ++t_;
  return state;
}

ScenarioGenerator new_generator(const ScenarioSpec& spec, const SystemConfig& cfg) {
  return ScenarioGenerator(spec, cfg);
}

ReplayStream ReplayStream::from_csv(const std::string& path, const SystemConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open replay file " + path);
  const std::size_t n = cfg.size();
  std::string line;
  if (!std::getline(in, line)) throw InvalidConfig("replay file is empty: " + path);

  std::vector<SystemState> states;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidConfig("replay row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (cells.size() != n + 2) {
      throw InvalidConfig("replay row " + std::to_string(row) + ": expected t,r_1..r_N,p");
    }
    SystemState s;
    s.slot = static_cast<std::size_t>(cells[0]);
    s.r.assign(cells.begin() + 1, cells.begin() + 1 + static_cast<std::ptrdiff_t>(n));
    s.p = cells.back();
    for (std::size_t i = 0; i < n; ++i) {
      if (s.r[i] < cfg.phases[i].r_min || s.r[i] > cfg.phases[i].r_max) {
        throw InvalidConfig("replay row " + std::to_string(row) + ": r outside [r_min, r_max]");
      }
    }
    if (s.p < cfg.p_min || s.p > cfg.p_max) {
      throw InvalidConfig("replay row " + std::to_string(row) + ": price outside [p_min, p_max]");
    }
    states.push_back(std::move(s));
  }
  return ReplayStream(std::move(states));
}

std::optional<SystemState> ReplayStream::next() {
  if (pos_ >= states_.size()) return std::nullopt;
  return states_[pos_++];
}

}  // namespace phasebal
