#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "phasebal/model.hpp"

namespace phasebal {

using Matrix = std::vector<std::vector<double>>;

// Identifier written into configs and outputs so runs can be reproduced.
inline constexpr const char* kRngAlgorithm = "mt19937_64+box-muller";

struct ScenarioSpec {
  std::uint64_t seed = 1;
  std::size_t horizon = 500;
  std::vector<double> flow_mean;  // kW, one per phase
  std::vector<double> flow_std;   // kW, one per phase
  Matrix phase_corr;              // N x N; empty means identity
  double time_corr = 0.0;         // AR(1) coefficient, |rho| < 1
  std::string rng = kRngAlgorithm;
};

// Zero-mean, 4 kW, independent, i.i.d. flows.
ScenarioSpec default_scenario_spec(std::size_t n_phases, std::uint64_t seed = 1,
                                   std::size_t horizon = 500);

// Lower-triangular L with L L' = m for a positive semidefinite m. Zero pivots
// are allowed (perfect correlation); throws NonPSDCorrelation otherwise.
Matrix psd_cholesky(const Matrix& m, double tol = 1e-12);

// Source of exogenous states q_t = (r_t, p_t).
class StateStream {
 public:
  virtual ~StateStream() = default;
  virtual std::optional<SystemState> next() = 0;
};

// Uniform doubles in [0, 1) and standard normals from a 64-bit Mersenne
// Twister. Distributions are written out here rather than taken from <random>
// because the standard leaves their algorithms implementation-defined.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// Truncated correlated Gaussian flows with AR(1) time correlation plus
// uniform prices:
//   z_t = rho2 z_{t-1} + sqrt(1 - rho2^2) w_t,  w_t ~ N(0, D R D)
//   r_t = clamp(mean + z_t, r_min, r_max)
// z_0 is drawn from the stationary law, so every slot has marginal std
// flow_std before clamping.
class ScenarioGenerator final : public StateStream {
 public:
  ScenarioGenerator(const ScenarioSpec& spec, const SystemConfig& cfg);

  std::optional<SystemState> next() override;

  // Draws the next price from the price stream (independent of flows).
  double sample_price();

  // Pre-clamp flows of the most recent slot.
  const std::vector<double>& latent_flows() const { return latent_; }

  std::size_t emitted() const { return t_; }

 private:
  ScenarioSpec spec_;
  std::vector<double> r_min_;
  std::vector<double> r_max_;
  double p_min_;
  double p_max_;
  Matrix factor_;  // Cholesky factor of the flow covariance
  PortableRng flow_rng_;
  PortableRng price_rng_;
  std::vector<double> z_;
  std::vector<double> latent_;
  std::size_t t_ = 0;
};

ScenarioGenerator new_generator(const ScenarioSpec& spec, const SystemConfig& cfg);

// Replays states from a CSV with header t,r_1,...,r_N,p.
class ReplayStream final : public StateStream {
 public:
  static ReplayStream from_csv(const std::string& path, const SystemConfig& cfg);
  explicit ReplayStream(std::vector<SystemState> states) : states_(std::move(states)) {}

  std::optional<SystemState> next() override;
  std::size_t size() const { return states_.size(); }

 private:
  std::vector<SystemState> states_;
  std::size_t pos_ = 0;
};

}  // namespace phasebal
