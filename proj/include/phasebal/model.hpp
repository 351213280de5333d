#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace phasebal {

// Absolute power-balance tolerance (kW) for a returned action.
inline constexpr double kBalanceTolerance = 1e-6;

// Ideal storage carries one net variable u = u+ - u-; non-ideal storage keeps
// charging and discharging separate with efficiencies.
enum class StorageMode { Ideal, NonIdeal };

std::string to_string(StorageMode mode);
StorageMode storage_mode_from_string(const std::string& text);

struct QuadraticCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

// Convex, continuously differentiable scalar cost. Quadratics are the
// supported closed-form kind; General wraps a caller-supplied
// (value, derivative) pair and is solved iteratively.
class CostFunction {
 public:
  enum class Kind { Quadratic, General };

  using ScalarFn = std::function<double(double)>;

  CostFunction() = default;

  static CostFunction quadratic(double a, double b = 0.0, double c = 0.0);
  static CostFunction general(ScalarFn value, ScalarFn derivative);

  Kind kind() const { return kind_; }
  bool is_quadratic() const { return kind_ == Kind::Quadratic; }
  const QuadraticCoeffs& coeffs() const { return coeffs_; }

  double value(double x) const;
  double derivative(double x) const;

 private:
  Kind kind_ = Kind::Quadratic;
  QuadraticCoeffs coeffs_{};
  ScalarFn value_;
  ScalarFn derivative_;
};

double eval_cost(const CostFunction& fn, double x);
double eval_derivative(const CostFunction& fn, double x);

struct StorageParams {
  double s_min = 0.0;
  double s_max = 0.0;
  double u_max = 0.0;
  double eta_plus = 1.0;
  double eta_minus = 1.0;
  double s_initial = 0.0;
};

struct PhaseConfig {
  std::optional<StorageParams> storage;  // absent: no storage at this phase
  CostFunction cost_l;                   // controllable-flow cost C_i
  CostFunction cost_deg;                 // degradation cost D_i
  double r_min = 0.0;
  double r_max = 0.0;
  double f_min = 0.0;
  double f_max = 0.0;

  bool has_storage() const { return storage.has_value(); }
};

struct SystemConfig {
  std::vector<PhaseConfig> phases;
  CostFunction loss;  // imbalance loss F
  double p_min = 0.0;
  double p_max = 0.0;

  std::size_t size() const { return phases.size(); }
};

// Defaults used throughout the experiments: r in [-8,8], f in [-5,5],
// s in [2,10] kWh, u_max 1 kW, prices [7,12], C = 1.5x^2, D = 0.2x^2,
// F = 10x^2, lossless storage, empty storage at t = 0.
SystemConfig default_system_config(std::size_t n_phases = 3);

// Throws InvalidConfig naming the first violated invariant.
SystemConfig validate_config(const SystemConfig& cfg);

struct SystemState {
  std::vector<double> r;
  double p = 0.0;
  std::size_t slot = 0;
};

struct Action {
  StorageMode mode = StorageMode::Ideal;
  std::vector<double> l;
  std::vector<double> u_plus;
  std::vector<double> u_minus;
  std::vector<double> f;

  static Action zeros(std::size_t n, StorageMode mode);
  double net_storage(std::size_t i) const { return u_plus[i] - u_minus[i]; }
};

// Power the storage at phase i draws from the phase: u+/eta+ - eta- u-
// (ideal: the net charge).
double storage_draw(const PhaseConfig& phase, StorageMode mode, double u_plus, double u_minus);

// Signed per-phase balance residual f + r + l - storage_draw.
double balance_residual(const SystemConfig& cfg, const SystemState& state, const Action& action,
                        std::size_t i);
double max_balance_residual(const SystemConfig& cfg, const SystemState& state, const Action& action);

struct PhaseRanges {
  double l_min = 0.0;
  double l_max = 0.0;
  double cp_min = 0.0;  // C' over [l_min, l_max]
  double cp_max = 0.0;
  double dp_min = 0.0;  // D' over [-u_max, u_max]
  double dp_max = 0.0;
  double c_max = 0.0;
  double d_max = 0.0;
};

struct DerivedRanges {
  std::vector<PhaseRanges> phases;
};

DerivedRanges derive_ranges(const SystemConfig& cfg);

struct CostBreakdown {
  double arbitrage = 0.0;
  double degradation = 0.0;
  double controllable = 0.0;
  double imbalance = 0.0;
  double total = 0.0;
};

// System cost w_t of one slot. Throws BalanceViolation when the action
// breaks power balance by more than kBalanceTolerance.
CostBreakdown system_cost(const SystemConfig& cfg, const SystemState& state, const Action& action);

}  // namespace phasebal
