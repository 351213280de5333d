#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "phasebal/errors.hpp"
#include "phasebal/scenario.hpp"

using namespace phasebal;

namespace {

struct Series {
  std::vector<std::vector<double>> latent;  // [phase][t]
  std::vector<std::vector<double>> r;
  std::vector<double> p;
};

Series draw(const ScenarioSpec& spec, const SystemConfig& cfg) {
  ScenarioGenerator gen(spec, cfg);
  Series s;
  s.latent.resize(cfg.size());
  s.r.resize(cfg.size());
  while (auto st = gen.next()) {
    for (std::size_t i = 0; i < cfg.size(); ++i) {
      s.latent[i].push_back(gen.latent_flows()[i]);
      s.r[i].push_back(st->r[i]);
    }
    s.p.push_back(st->p);
  }
  return s;
}

double mean(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  return m / static_cast<double>(x.size());
}

double stdev(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    sab += (a[t] - ma) * (b[t] - mb);
    saa += (a[t] - ma) * (a[t] - ma);
    sbb += (b[t] - mb) * (b[t] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double lag1(const std::vector<double>& x) {
  return corr(std::vector<double>(x.begin(), x.end() - 1), std::vector<double>(x.begin() + 1, x.end()));
}

// Std of N(0, sigma^2) clamped to [-a, a], by Simpson quadrature.
double clamped_normal_std(double sigma, double a) {
  const int n = 20000;
  const double h = 2.0 * a / n;
  auto pdf = [&](double x) {
    return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  double inner = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double x = -a + k * h;
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    inner += w * x * x * pdf(x);
  }
  inner *= h / 3.0;
  const double tail = 0.5 * std::erfc(a / (sigma * std::sqrt(2.0)));
  return std::sqrt(inner + 2.0 * a * a * tail);
}

}  // namespace

TEST(Scenario, SameSeedSameSequence) {
  const auto cfg = default_system_config(3);
  auto spec = default_scenario_spec(3, 42, 300);
  spec.time_corr = 0.3;
  const auto a = draw(spec, cfg);
  const auto b = draw(spec, cfg);
  EXPECT_EQ(a.r, b.r);
  EXPECT_EQ(a.p, b.p);
  spec.seed = 43;
  EXPECT_NE(draw(spec, cfg).r, a.r);
}

TEST(Scenario, EmitsExactlyHorizonStates) {
  const auto cfg = default_system_config(3);
  ScenarioGenerator gen(default_scenario_spec(3, 1, 17), cfg);
  int count = 0;
  while (gen.next()) ++count;
  EXPECT_EQ(count, 17);
  EXPECT_FALSE(gen.next().has_value());
}

TEST(Scenario, IndependentCaseHasNoLagOneCorrelation) {
  const auto cfg = default_system_config(3);
  const auto s = draw(default_scenario_spec(3, 7, 10000), cfg);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(lag1(s.latent[i]), 0.0, 0.05);
}

TEST(Scenario, TimeCorrelationAndStationaryVariance) {
  const auto cfg = default_system_config(3);
  for (double rho : {-0.5, 0.5, 0.9}) {
    auto spec = default_scenario_spec(3, 9, 20000);
    spec.time_corr = rho;
    const auto s = draw(spec, cfg);
    EXPECT_NEAR(lag1(s.latent[0]), rho, 0.05) << rho;
    // variance preserved by the sqrt(1 - rho^2) innovation scaling
    EXPECT_NEAR(stdev(s.latent[0]), 4.0, rho > 0.8 ? 0.3 : 0.15) << rho;
  }
}

TEST(Scenario, PerfectCorrelationGivesEqualFlows) {
  const auto cfg = default_system_config(3);
  auto spec = default_scenario_spec(3, 3, 500);
  spec.phase_corr[0][1] = spec.phase_corr[1][0] = 1.0;
  const auto s = draw(spec, cfg);
  EXPECT_EQ(s.latent[0], s.latent[1]);
  EXPECT_EQ(s.r[0], s.r[1]);
}

TEST(Scenario, PhaseCorrelationReproduced) {
  const auto cfg = default_system_config(3);
  for (double rho : {-0.6, 0.35, 0.7}) {
    auto spec = default_scenario_spec(3, 21, 10000);
    spec.phase_corr[0][1] = spec.phase_corr[1][0] = rho;
    const auto s = draw(spec, cfg);
    EXPECT_NEAR(corr(s.latent[0], s.latent[1]), rho, 0.05);
    EXPECT_NEAR(corr(s.latent[0], s.latent[2]), 0.0, 0.05);
  }
}

TEST(Scenario, FlowsClampedToBounds) {
  auto cfg = default_system_config(3);
  cfg.phases[2].r_min = -1.0;
  cfg.phases[2].r_max = 2.0;
  const auto s = draw(default_scenario_spec(3, 5, 5000), cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    for (double r : s.r[i]) {
      EXPECT_GE(r, cfg.phases[i].r_min);
      EXPECT_LE(r, cfg.phases[i].r_max);
    }
  }
}

TEST(Scenario, ClampedStdMatchesQuadratureOracle) {
  const auto cfg = default_system_config(3);
  const auto s = draw(default_scenario_spec(3, 2024, 10000), cfg);
  const double expected = clamped_normal_std(4.0, 8.0);
  EXPECT_NEAR(expected, 3.8378, 1e-3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(stdev(s.r[i]), expected, 0.15);
}

TEST(Scenario, PriceDegenerateInterval) {
  auto cfg = default_system_config(3);
  cfg.p_min = cfg.p_max = 10.0;
  const auto s = draw(default_scenario_spec(3, 1, 100), cfg);
  for (double p : s.p) EXPECT_EQ(p, 10.0);
}

TEST(Scenario, PriceUniformOnDefaultInterval) {
  const auto cfg = default_system_config(3);
  const auto s = draw(default_scenario_spec(3, 77, 10000), cfg);
  EXPECT_NEAR(mean(s.p), 9.5, 0.1);
  for (double p : s.p) {
    EXPECT_GE(p, 7.0);
    EXPECT_LE(p, 12.0);
  }
  EXPECT_NEAR(corr(s.p, s.latent[0]), 0.0, 0.05);
}

TEST(Scenario, PriceStreamIndependentOfFlowSettings) {
  const auto cfg = default_system_config(3);
  auto spec = default_scenario_spec(3, 13, 200);
  const auto a = draw(spec, cfg);
  spec.time_corr = 0.7;
  spec.phase_corr[0][1] = spec.phase_corr[1][0] = 0.5;
  EXPECT_EQ(draw(spec, cfg).p, a.p);
}

TEST(Scenario, NonPsdCorrelationRejected) {
  const auto cfg = default_system_config(3);
  auto spec = default_scenario_spec(3, 1, 10);
  // corr(1,2) = corr(1,3) = rho with corr(2,3) = 0 needs rho <= 1/sqrt(2)
  spec.phase_corr[0][1] = spec.phase_corr[1][0] = 0.75;
  spec.phase_corr[0][2] = spec.phase_corr[2][0] = 0.75;
  EXPECT_THROW(ScenarioGenerator(spec, cfg), NonPSDCorrelation);
  spec.phase_corr[0][1] = spec.phase_corr[1][0] = 0.7;
  spec.phase_corr[0][2] = spec.phase_corr[2][0] = 0.7;
  EXPECT_NO_THROW(ScenarioGenerator(spec, cfg));
}

TEST(Scenario, InvalidSpecsRejected) {
  const auto cfg = default_system_config(3);
  auto spec = default_scenario_spec(3, 1, 10);
  spec.time_corr = 1.0;
  EXPECT_THROW(ScenarioGenerator(spec, cfg), InvalidConfig);
  spec = default_scenario_spec(2, 1, 10);
  EXPECT_THROW(ScenarioGenerator(spec, cfg), InvalidConfig);
  spec = default_scenario_spec(3, 1, 10);
  spec.phase_corr[0][1] = 0.2;
  EXPECT_THROW(ScenarioGenerator(spec, cfg), InvalidConfig);
  spec = default_scenario_spec(3, 1, 10);
  spec.rng = "pcg32";
  EXPECT_THROW(ScenarioGenerator(spec, cfg), InvalidConfig);
}

TEST(PsdCholesky, ReconstructsMatrix) {
  const Matrix m{{1.0, 0.5, 0.2}, {0.5, 1.0, 0.3}, {0.2, 0.3, 1.0}};
  const auto l = psd_cholesky(m);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += l[i][k] * l[j][k];
      EXPECT_NEAR(s, m[i][j], 1e-14);
    }
  }
}

TEST(PortableRng, KnownFirstDraws) {
  // mt19937_64 with the default seed produces 14514284786278117030 first;
  // the top 53 bits scaled by 2^-53 give the first uniform.
  PortableRng rng(5489);
  EXPECT_DOUBLE_EQ(rng.uniform(), static_cast<double>(14514284786278117030ULL >> 11) * 0x1.0p-53);
}

TEST(Replay, ReadsCsvAndChecksBounds) {
  const auto cfg = default_system_config(2);
  const auto path = std::filesystem::temp_directory_path() / "phasebal_replay_test.csv";
  {
    std::ofstream os(path);
    os << "t,r_1,r_2,p\n0,1.5,-2,8\n1,0,0,12\n";
  }
  auto stream = ReplayStream::from_csv(path.string(), cfg);
  EXPECT_EQ(stream.size(), 2u);
  const auto first = stream.next();
  ASSERT_TRUE(first);
  EXPECT_EQ(first->r, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(first->p, 8.0);
  {
    std::ofstream os(path);
    os << "t,r_1,r_2,p\n0,9,0,8\n";
  }
  EXPECT_THROW(ReplayStream::from_csv(path.string(), cfg), InvalidConfig);
  {
    std::ofstream os(path);
    os << "t,r_1,r_2,p\n0,1,8\n";
  }
  EXPECT_THROW(ReplayStream::from_csv(path.string(), cfg), InvalidConfig);
  std::filesystem::remove(path);
}
